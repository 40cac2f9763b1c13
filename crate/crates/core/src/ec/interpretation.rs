use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use super::{Atom, FluentState, Sym, Term, HAPPENS_AT, HOLDS_AT};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterpretationError {
    #[error("empty or inverted time range [{0},{1}]")]
    BadRange(i64, i64),
    #[error("narrative atom {0} is not a ground happensAt/2 or holdsAt/2 fact")]
    BadNarrative(String),
    #[error("annotation atom {0} is not a ground holdsAt/2 fact")]
    BadAnnotation(String),
    #[error("atom {atom} has time {time} outside [{start},{end}]")]
    OutOfRange {
        atom: String,
        time: i64,
        start: i64,
        end: i64,
    },
}

/// One training example: a closed-world set of ground atoms over an inclusive
/// time window.
///
/// The annotation covers `start ..= end + 1`, so one-step inference at every
/// time point of the window can be checked, and the state at `start` seeds
/// inference for the window.
#[derive(Clone)]
pub struct Interpretation {
    id: u64,
    start: i64,
    end: i64,
    narrative: BTreeSet<Atom>,
    annotation: BTreeMap<i64, BTreeSet<Term>>,
    index: HashMap<i64, HashMap<Sym, Vec<Atom>>>,
}

fn narrative_time(a: &Atom) -> Option<i64> {
    if (a.pred.as_ref() == HAPPENS_AT || a.pred.as_ref() == HOLDS_AT) && a.args.len() == 2 && a.is_ground() {
        a.time()
    } else {
        None
    }
}

impl Interpretation {
    pub fn new(
        id: u64,
        start: i64,
        end: i64,
        narrative: impl IntoIterator<Item = Atom>,
        annotation: impl IntoIterator<Item = Atom>,
    ) -> Result<Self, InterpretationError> {
        if end < start {
            return Err(InterpretationError::BadRange(start, end));
        }
        let narrative: BTreeSet<Atom> = narrative.into_iter().collect();
        let mut index: HashMap<i64, HashMap<Sym, Vec<Atom>>> = HashMap::new();
        for a in &narrative {
            let t = narrative_time(a).ok_or_else(|| InterpretationError::BadNarrative(a.to_string()))?;
            if t < start || t > end {
                return Err(InterpretationError::OutOfRange {
                    atom: a.to_string(),
                    time: t,
                    start,
                    end,
                });
            }
            index.entry(t).or_default().entry(a.pred.clone()).or_default().push(a.clone());
        }
        let mut ann: BTreeMap<i64, BTreeSet<Term>> = BTreeMap::new();
        for a in annotation {
            let t = match narrative_time(&a) {
                Some(t) if a.pred.as_ref() == HOLDS_AT => t,
                _ => return Err(InterpretationError::BadAnnotation(a.to_string())),
            };
            if t < start || t > end + 1 {
                return Err(InterpretationError::OutOfRange {
                    atom: a.to_string(),
                    time: t,
                    start,
                    end: end + 1,
                });
            }
            ann.entry(t).or_default().insert(a.args[0].clone());
        }
        Ok(Interpretation {
            id,
            start,
            end,
            narrative,
            annotation: ann,
            index,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.end
    }

    pub fn times(&self) -> std::ops::RangeInclusive<i64> {
        self.start..=self.end
    }

    pub fn narrative(&self) -> &BTreeSet<Atom> {
        &self.narrative
    }

    /// Narrative atoms with the given predicate at time `t`.
    pub fn facts_at(&self, pred: &str, t: i64) -> &[Atom] {
        self.index
            .get(&t)
            .and_then(|m| m.get(pred))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Context value lookup: the arguments of `holdsAt(functor(entity, ...), t)`
    /// after the entity, e.g. the coordinates of a person.
    pub fn context(&self, functor: &str, entity: &Term, t: i64) -> Option<&[Term]> {
        self.facts_at(HOLDS_AT, t).iter().find_map(|a| match &a.args[0] {
            Term::Fn(f, args) if f.as_ref() == functor && args.first() == Some(entity) => Some(&args[1..]),
            _ => None,
        })
    }

    pub fn is_annotated(&self, fluent: &Term, t: i64) -> bool {
        self.annotation.get(&t).is_some_and(|s| s.contains(fluent))
    }

    pub fn annotated_at(&self, t: i64) -> impl Iterator<Item = &Term> {
        self.annotation.get(&t).into_iter().flatten()
    }

    /// Annotation rendered back to `holdsAt/2` atoms, in time order.
    pub fn annotation_atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.annotation
            .iter()
            .flat_map(|(t, fs)| fs.iter().map(move |f| Atom::holds_at(f.clone(), *t)))
    }

    pub fn has_positive(&self) -> bool {
        self.annotation.values().any(|s| !s.is_empty())
    }

    /// The annotated state at the window start.
    pub fn initial_state(&self) -> FluentState {
        FluentState::from_iter(self.annotated_at(self.start).cloned())
    }

    /// Same content with a different id.
    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }
}

impl PartialEq for Interpretation {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.start == other.start
            && self.end == other.end
            && self.narrative == other.narrative
            && self.annotation == other.annotation
    }
}

impl Eq for Interpretation {}

impl fmt::Debug for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Interpretation")
            .field("id", &self.id)
            .field("range", &(self.start, self.end))
            .field("narrative", &self.narrative.len())
            .field("annotation", &self.annotation)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::parse_atom;

    fn a(s: &str) -> Atom {
        parse_atom(s).unwrap()
    }

    #[test]
    fn rejects_out_of_window_atoms() {
        let err = Interpretation::new(0, 1, 2, [a("happensAt(walk(id1),3)")], []).unwrap_err();
        assert!(matches!(err, InterpretationError::OutOfRange { time: 3, .. }));
        let err = Interpretation::new(0, 1, 2, [], [a("holdsAt(moving(id1,id2),4)")]).unwrap_err();
        assert!(matches!(err, InterpretationError::OutOfRange { time: 4, .. }));
        assert!(Interpretation::new(0, 1, 2, [], [a("holdsAt(moving(id1,id2),3)")]).is_ok());
    }

    #[test]
    fn rejects_non_ground_narrative() {
        let err = Interpretation::new(0, 1, 2, [a("happensAt(walk(X),1)")], []).unwrap_err();
        assert!(matches!(err, InterpretationError::BadNarrative(_)));
    }

    #[test]
    fn context_lookup() {
        let i = Interpretation::new(0, 1, 1, [a("holdsAt(coords(id1,201,454),1)")], []).unwrap();
        let c = i.context("coords", &Term::constant("id1"), 1).unwrap();
        assert_eq!(c, &[Term::int(201), Term::int(454)]);
        assert!(i.context("coords", &Term::constant("id2"), 1).is_none());
    }
}
