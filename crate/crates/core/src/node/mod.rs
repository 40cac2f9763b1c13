//! Theories, instance classification and the learner node state machine.

mod learner;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::clause::{BottomClause, Clause, ClauseId, HeadKind, ModeSet, Seed};
use crate::ec::{parse::parse_clauses, step_infer, CoverError, FluentState, Interpretation, ParseError, Term, INITIATED_AT, TERMINATED_AT};

pub use learner::{LearnFlags, LearnerNode, NodeConfig, NodeError, Phase, PrunedClause};

/// Initiation and termination clauses, kept in id order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Theory {
    pub initiation: Vec<Clause>,
    pub termination: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TheoryError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("clause head {0} is neither initiatedAt/2 nor terminatedAt/2")]
    BadHead(String),
}

impl Theory {
    pub fn new(mut initiation: Vec<Clause>, mut termination: Vec<Clause>) -> Self {
        initiation.sort_by_key(|c| c.id);
        termination.sort_by_key(|c| c.id);
        Theory { initiation, termination }
    }

    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.initiation.iter().chain(&self.termination)
    }

    pub fn of_kind(&self, kind: HeadKind) -> &[Clause] {
        match kind {
            HeadKind::Initiation => &self.initiation,
            HeadKind::Termination => &self.termination,
        }
    }

    pub fn len(&self) -> usize {
        self.initiation.len() + self.termination.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total number of literals, heads included.
    pub fn size_literals(&self) -> usize {
        self.clauses().map(Clause::size_literals).sum()
    }

    pub fn signature(&self) -> BTreeSet<(ClauseId, String)> {
        self.clauses().map(Clause::signature).collect()
    }

    /// One clause per line, initiation clauses first.
    pub fn render(&self) -> String {
        self.clauses().map(|c| format!("{}\n", c.render())).collect()
    }

    /// Reads a rendered theory. Clause ids are assigned in file order.
    pub fn parse(src: &str) -> Result<Theory, TheoryError> {
        let mut init = Vec::new();
        let mut term = Vec::new();
        for (i, (head, body)) in parse_clauses(src)?.into_iter().enumerate() {
            let kind = match (head.pred.as_ref(), head.args.len()) {
                (INITIATED_AT, 2) => HeadKind::Initiation,
                (TERMINATED_AT, 2) => HeadKind::Termination,
                _ => return Err(TheoryError::BadHead(head.to_string())),
            };
            let seed = Seed {
                interpretation: 0,
                time: 0,
                fluent: head.args[0].clone(),
            };
            let bottom = Arc::new(BottomClause {
                head,
                literals: body.clone(),
            });
            let c = Clause::with_body(ClauseId::new(0, i as u32), 0, kind, bottom, seed, body, 0);
            match kind {
                HeadKind::Initiation => init.push(c),
                HeadKind::Termination => term.push(c),
            }
        }
        Ok(Theory::new(init, term))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Tp,
    Fp,
    Fn,
    Tn,
}

/// How the state at each time point is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateMode {
    /// Chain inferred states from `prev` through the window.
    Inferred,
    /// Use the annotation at every time point as the current state.
    TeacherForced,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// `2tp / (2tp + fp + fn)`, 0 when there is nothing to score.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    /// `(fluent, time, label)` for every candidate fluent at every time in
    /// `start+1 ..= end+1`.
    pub labels: Vec<(Term, i64, Label)>,
    pub counts: Confusion,
    pub next: FluentState,
}

/// Target fluents worth checking in `interp`: head groundings over its typed
/// constants, plus anything annotated or already holding.
pub fn candidate_fluents(modes: &ModeSet, interp: &Interpretation, prev: &FluentState) -> BTreeSet<Term> {
    let domains = modes.type_domains(interp);
    let mut out: BTreeSet<Term> = [HeadKind::Initiation, HeadKind::Termination]
        .into_iter()
        .flat_map(|k| modes.head_groundings(k, &domains))
        .collect();
    for t in interp.start()..=interp.end() + 1 {
        out.extend(interp.annotated_at(t).cloned());
    }
    out.extend(prev.iter().cloned());
    out
}

fn fires_any(clauses: &[Clause], interp: &Interpretation, f: &Term, t: i64) -> Result<bool, CoverError> {
    for c in clauses {
        if c.fires(interp, f, t)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Labels every candidate fluent at every time point of the window by
/// comparing inferred and annotated truth.
pub fn classify_instances(
    theory: &Theory,
    interp: &Interpretation,
    prev: &FluentState,
    modes: &ModeSet,
    mode: StateMode,
) -> Result<Classification, CoverError> {
    let fluents = candidate_fluents(modes, interp, prev);
    let mut state = prev.clone();
    let mut labels = Vec::new();
    let mut counts = Confusion::default();
    for t in interp.times() {
        if mode == StateMode::TeacherForced {
            state = interp.annotated_at(t).cloned().collect();
        }
        let mut initiated = BTreeSet::new();
        let mut terminated = BTreeSet::new();
        for f in &fluents {
            if fires_any(&theory.initiation, interp, f, t)? {
                initiated.insert(f.clone());
            }
            if state.holds(f) && fires_any(&theory.termination, interp, f, t)? {
                terminated.insert(f.clone());
            }
        }
        state = step_infer(&state, &initiated, &terminated);
        for f in &fluents {
            let label = match (state.holds(f), interp.is_annotated(f, t + 1)) {
                (true, true) => Label::Tp,
                (true, false) => Label::Fp,
                (false, true) => Label::Fn,
                (false, false) => Label::Tn,
            };
            match label {
                Label::Tp => counts.tp += 1,
                Label::Fp => counts.fp += 1,
                Label::Fn => counts.fn_ += 1,
                Label::Tn => counts.tn += 1,
            }
            labels.push((f.clone(), t + 1, label));
        }
    }
    Ok(Classification {
        labels,
        counts,
        next: state,
    })
}

/// Classifies a whole stream, carrying the inferred state from one window
/// to the next. The state starts empty and is reset at any gap in time.
pub fn classify_stream(
    theory: &Theory,
    stream: &[Interpretation],
    modes: &ModeSet,
) -> Result<Vec<Classification>, CoverError> {
    let mut out: Vec<Classification> = Vec::with_capacity(stream.len());
    let mut prev_end = None;
    for i in stream {
        let prev = match (prev_end, out.last()) {
            (Some(e), Some(c)) if e + 1 == i.start() => c.next.clone(),
            _ => FluentState::default(),
        };
        out.push(classify_instances(theory, i, &prev, modes, StateMode::Inferred)?);
        prev_end = Some(i.end());
    }
    Ok(out)
}

/// Per-fluent predictions over a stream, keyed by `(interpretation, time,
/// fluent)`.
pub fn predictions(
    theory: &Theory,
    stream: &[Interpretation],
    modes: &ModeSet,
) -> Result<BTreeMap<(u64, i64, Term), bool>, CoverError> {
    let mut out = BTreeMap::new();
    for (i, c) in stream.iter().zip(classify_stream(theory, stream, modes)?) {
        for (f, t, l) in c.labels {
            out.insert((i.id(), t, f), matches!(l, Label::Tp | Label::Fp));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::parse_atom;

    const MODES: &str = "\
modeh(initiatedAt(moving(+person,+person),+time)).
modeh(terminatedAt(moving(+person,+person),+time)).
modeb(happensAt(walk(+person),+time)).
modeb(distLessThan(+person,+person,#dist,+time)).
modeb(dirLessThan(+person,+person,#angle,+time)).
pool(dist, [25,30,40]).
pool(angle, [45,90]).
";

    fn interp(ann: &[&str]) -> Interpretation {
        let facts = ["happensAt(walk(id1),1)", "happensAt(walk(id2),1)"];
        Interpretation::new(
            0,
            1,
            1,
            facts.iter().map(|f| parse_atom(f).unwrap()),
            ann.iter().map(|f| parse_atom(f).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn empty_theory_labels() {
        let m = ModeSet::parse(MODES).unwrap();
        let i = interp(&["holdsAt(moving(id1,id2),2)"]);
        let c = classify_instances(&Theory::default(), &i, &FluentState::default(), &m, StateMode::Inferred).unwrap();
        assert_eq!(c.counts.fn_, 1);
        assert_eq!(c.counts.tn, 1);
        let i = interp(&[]);
        let c = classify_instances(&Theory::default(), &i, &FluentState::default(), &m, StateMode::Inferred).unwrap();
        assert!(c.labels.iter().all(|l| l.2 == Label::Tn));
    }

    #[test]
    fn theory_render_parse_round_trip() {
        let src = "initiatedAt(moving(X,Y),T) :- happensAt(walk(X),T), happensAt(walk(Y),T).\nterminatedAt(moving(X,Y),T).\n";
        let t = Theory::parse(src).unwrap();
        assert_eq!(t.initiation.len(), 1);
        assert_eq!(t.termination.len(), 1);
        assert_eq!(t.size_literals(), 4);
        assert_eq!(t.render(), src);
        assert!(Theory::parse("holdsAt(f,1).").is_err());
    }

    #[test]
    fn f1_arithmetic() {
        let c = Confusion {
            tp: 8,
            fp: 2,
            fn_: 2,
            tn: 0,
        };
        assert!((c.f1() - 0.8).abs() < 1e-12);
        assert_eq!(Confusion::default().f1(), 0.0);
    }
}
