//! Clauses, mode declarations, bottom clauses and single-literal
//! specialization.

mod bottom;
pub mod modes;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ec::{covers, cover_body, Atom, CoverError, Interpretation, Literal, Subst, Term};
use crate::scoring::ClauseStats;

pub use bottom::{construct_bottom, BottomClause};
pub use modes::{ModeDeclaration, ModeError, ModeKind, ModeSet, Placemark, TypeDomains};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Initiation,
    Termination,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Initiation => "initiation",
            HeadKind::Termination => "termination",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClauseError {
    #[error("no head mode matches target fluent {0}")]
    NoHeadMode(String),
    #[error("bad clause id {0:?}")]
    BadId(String),
    #[error("unknown specialization {0:?}")]
    UnknownCandidate(String),
}

/// Globally unique clause identifier: originating node and a per-node
/// counter. Rendered as `n<origin>c<seq>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClauseId {
    pub origin: u32,
    pub seq: u32,
}

impl ClauseId {
    pub fn new(origin: u32, seq: u32) -> Self {
        ClauseId { origin, seq }
    }
}

impl fmt::Display for ClauseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}c{}", self.origin, self.seq)
    }
}

impl FromStr for ClauseId {
    type Err = ClauseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClauseError::BadId(s.to_string());
        let rest = s.strip_prefix('n').ok_or_else(bad)?;
        let (o, q) = rest.split_once('c').ok_or_else(bad)?;
        Ok(ClauseId {
            origin: o.parse().map_err(|_| bad())?,
            seq: q.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for ClauseId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClauseId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The example a clause was generated from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Seed {
    pub interpretation: u64,
    pub time: i64,
    pub fluent: Term,
}

/// Counts for one candidate specialization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refinement {
    pub literal: Literal,
    /// Own counts plus everything merged from peers.
    pub stats: ClauseStats,
    /// Counts from this node's stream only.
    pub local: ClauseStats,
}

/// A candidate specialization; the clause itself has the empty key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub key: String,
    pub body: Vec<Literal>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub id: ClauseId,
    /// Bumped on every specialization; requests carry it to detect staleness.
    pub version: u32,
    pub kind: HeadKind,
    pub head: Atom,
    pub body: Vec<Literal>,
    pub bottom: Arc<BottomClause>,
    pub seed: Seed,
    pub stats: ClauseStats,
    pub local_stats: ClauseStats,
    pub refinements: BTreeMap<String, Refinement>,
    /// Interpretations seen on this node since the last structural change.
    pub stable_since: u64,
    /// Parent observation count at which the specialization producing this
    /// version fired; 0 for a fresh clause.
    pub specialized_at: u64,
}

pub fn candidate_key(lit: &Literal) -> String {
    lit.to_string()
}

impl Clause {
    /// The empty-bodied clause `head(bottom) :-`.
    pub fn new(id: ClauseId, kind: HeadKind, bottom: Arc<BottomClause>, seed: Seed) -> Clause {
        Clause::with_body(id, 0, kind, bottom, seed, Vec::new(), 0)
    }

    pub fn with_body(
        id: ClauseId,
        version: u32,
        kind: HeadKind,
        bottom: Arc<BottomClause>,
        seed: Seed,
        body: Vec<Literal>,
        specialized_at: u64,
    ) -> Clause {
        let mut c = Clause {
            id,
            version,
            kind,
            head: bottom.head.clone(),
            body,
            bottom,
            seed,
            stats: ClauseStats::default(),
            local_stats: ClauseStats::default(),
            refinements: BTreeMap::new(),
            stable_since: 0,
            specialized_at,
        };
        c.refinements = c
            .refinement_literals()
            .into_iter()
            .map(|l| {
                (
                    candidate_key(&l),
                    Refinement {
                        literal: l,
                        stats: ClauseStats::default(),
                        local: ClauseStats::default(),
                    },
                )
            })
            .collect();
        c
    }

    /// Bottom literals not yet in the body that keep the clause connected.
    pub fn refinement_literals(&self) -> Vec<Literal> {
        self.bottom
            .literals
            .iter()
            .filter(|l| !self.body.contains(l) && self.bottom.connectable(&self.body, l))
            .cloned()
            .collect()
    }

    /// The clause itself (empty key) followed by one candidate per
    /// connectable bottom literal.
    pub fn specializations(&self) -> Vec<Candidate> {
        let mut out = vec![Candidate {
            key: String::new(),
            body: self.body.clone(),
        }];
        for l in self.refinement_literals() {
            let mut body = self.body.clone();
            body.push(l.clone());
            out.push(Candidate {
                key: candidate_key(&l),
                body,
            });
        }
        out
    }

    /// The next version of this clause with the candidate `key` appended,
    /// carrying fresh statistics.
    pub fn specialize(&self, key: &str, specialized_at: u64) -> Result<Clause, ClauseError> {
        let r = self
            .refinements
            .get(key)
            .ok_or_else(|| ClauseError::UnknownCandidate(key.to_string()))?;
        let mut body = self.body.clone();
        body.push(r.literal.clone());
        Ok(Clause::with_body(
            self.id,
            self.version + 1,
            self.kind,
            self.bottom.clone(),
            self.seed.clone(),
            body,
            specialized_at,
        ))
    }

    /// Head substitution for fluent `fluent` at `time`, if the head matches.
    pub fn head_subst(&self, fluent: &Term, time: i64) -> Option<Subst> {
        let ground = Atom {
            pred: self.head.pred.clone(),
            args: vec![fluent.clone(), Term::int(time)],
        };
        crate::ec::unify(&self.head, &ground, &Subst::new())
    }

    /// Whether the clause fires for `fluent` at `time`.
    pub fn fires(&self, interp: &Interpretation, fluent: &Term, time: i64) -> Result<bool, CoverError> {
        match self.head_subst(fluent, time) {
            Some(theta) => covers(&self.body, interp, time, &theta),
            None => Ok(false),
        }
    }

    /// Firing of the clause and of each candidate specialization, in
    /// `refinements` order.
    pub fn fires_with_refinements(
        &self,
        interp: &Interpretation,
        fluent: &Term,
        time: i64,
    ) -> Result<(bool, Vec<bool>), CoverError> {
        let Some(theta) = self.head_subst(fluent, time) else {
            return Ok((false, vec![false; self.refinements.len()]));
        };
        let covers_r = cover_body(&self.body, interp, time, &theta)?;
        if covers_r.is_empty() {
            return Ok((false, vec![false; self.refinements.len()]));
        }
        let mut out = Vec::with_capacity(self.refinements.len());
        for r in self.refinements.values() {
            let mut hit = false;
            for s in &covers_r {
                if covers(std::slice::from_ref(&r.literal), interp, time, s)? {
                    hit = true;
                    break;
                }
            }
            out.push(hit);
        }
        Ok((true, out))
    }

    /// Head plus body literals.
    pub fn size_literals(&self) -> usize {
        1 + self.body.len()
    }

    /// Structural identity used for replica comparison.
    pub fn signature(&self) -> (ClauseId, String) {
        (self.id, self.render())
    }

    pub fn render(&self) -> String {
        render_clause(&self.head, &self.body)
    }
}

pub fn render_clause(head: &Atom, body: &[Literal]) -> String {
    let mut s = head.to_string();
    for (i, l) in body.iter().enumerate() {
        s.push_str(if i == 0 { " :- " } else { ", " });
        s.push_str(&l.to_string());
    }
    s.push('.');
    s
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::{parse_atom, parse_term};

    const MODES: &str = "\
modeh(initiatedAt(moving(+person,+person),+time)).
modeh(terminatedAt(moving(+person,+person),+time)).
modeb(happensAt(walk(+person),+time)).
modeb(happensAt(inactive(+person),+time)).
modeb(distLessThan(+person,+person,#dist,+time)).
modeb(distMoreThan(+person,+person,#dist,+time)).
modeb(dirLessThan(+person,+person,#angle,+time)).
pool(dist, [25,30,40]).
pool(angle, [45,90]).
";

    fn table_2a() -> Interpretation {
        let facts = [
            "happensAt(walk(id1),1)",
            "happensAt(walk(id2),1)",
            "holdsAt(coords(id1,201,454),1)",
            "holdsAt(coords(id2,230,440),1)",
            "holdsAt(direction(id1,270),1)",
            "holdsAt(direction(id2,270),1)",
            "happensAt(walk(id1),2)",
            "happensAt(walk(id2),2)",
            "holdsAt(coords(id1,201,454),2)",
            "holdsAt(coords(id2,227,440),2)",
            "holdsAt(direction(id1,275),2)",
            "holdsAt(direction(id2,278),2)",
        ];
        Interpretation::new(
            0,
            1,
            2,
            facts.iter().map(|f| parse_atom(f).unwrap()),
            [parse_atom("holdsAt(moving(id1,id2),2)").unwrap()],
        )
        .unwrap()
    }

    fn seed() -> Seed {
        Seed {
            interpretation: 0,
            time: 1,
            fluent: parse_term("moving(id1,id2)").unwrap(),
        }
    }

    fn bottom() -> BottomClause {
        let modes = ModeSet::parse(MODES).unwrap();
        construct_bottom(&table_2a(), 1, &seed().fluent, HeadKind::Initiation, &modes).unwrap()
    }

    #[test]
    fn clause_id_round_trip() {
        let id = ClauseId::new(3, 17);
        assert_eq!(id.to_string(), "n3c17");
        assert_eq!("n3c17".parse::<ClauseId>().unwrap(), id);
        assert!("3c17".parse::<ClauseId>().is_err());
    }

    #[test]
    fn bottom_of_table_2a_at_time_1() {
        let b = bottom();
        assert_eq!(b.head.to_string(), "initiatedAt(moving(X0,X1),X2)");
        let lits: Vec<String> = b.literals.iter().map(|l| l.to_string()).collect();
        assert!(lits.contains(&"happensAt(walk(X0),X2)".to_string()));
        assert!(lits.contains(&"happensAt(walk(X1),X2)".to_string()));
        // distance at time 1 is 32.2: only the 40 threshold passes
        assert!(lits.contains(&"distLessThan(X0,X1,40,X2)".to_string()));
        assert!(!lits.contains(&"distLessThan(X0,X1,30,X2)".to_string()));
        assert!(lits.contains(&"distMoreThan(X0,X1,25,X2)".to_string()));
        assert!(lits.contains(&"dirLessThan(X0,X1,45,X2)".to_string()));
        assert!(!lits.iter().any(|l| l.contains("X0,X0") || l.contains("X1,X1")));
    }

    #[test]
    fn bottom_of_empty_narrative_is_empty() {
        let modes = ModeSet::parse(MODES).unwrap();
        let i = Interpretation::new(0, 1, 1, [], []).unwrap();
        let b = construct_bottom(&i, 1, &seed().fluent, HeadKind::Initiation, &modes).unwrap();
        assert!(b.literals.is_empty());
    }

    #[test]
    fn bottom_is_deterministic() {
        assert_eq!(bottom().to_string(), bottom().to_string());
    }

    #[test]
    fn bottom_requires_head_mode() {
        let modes = ModeSet::parse(MODES).unwrap();
        let f = parse_term("meeting(id1,id2)").unwrap();
        assert!(matches!(
            construct_bottom(&table_2a(), 1, &f, HeadKind::Initiation, &modes),
            Err(ClauseError::NoHeadMode(_))
        ));
    }

    #[test]
    fn specializations_of_empty_clause() {
        let b = Arc::new(bottom());
        let n = b.literals.len();
        let c = Clause::new(ClauseId::new(0, 0), HeadKind::Initiation, b.clone(), seed());
        let cands = c.specializations();
        assert_eq!(cands.len(), n + 1);
        assert_eq!(cands[0].key, "");
        let full = Clause::with_body(ClauseId::new(0, 0), 3, HeadKind::Initiation, b.clone(), seed(), b.literals.clone(), 0);
        assert_eq!(full.specializations().len(), 1);
        let twin = Clause::new(ClauseId::new(0, 0), HeadKind::Initiation, Arc::new(bottom()), seed());
        assert_eq!(
            c.refinements.keys().collect::<Vec<_>>(),
            twin.refinements.keys().collect::<Vec<_>>()
        );
    }

    #[test]
    fn specialize_bumps_version_and_resets_stats() {
        let mut c = Clause::new(ClauseId::new(1, 2), HeadKind::Initiation, Arc::new(bottom()), seed());
        c.stats = ClauseStats::new(1, 2, 3, 4);
        c.stable_since = 9;
        let key = "happensAt(walk(X0),X2)";
        let s = c.specialize(key, 4).unwrap();
        assert_eq!(s.id, c.id);
        assert_eq!(s.version, 1);
        assert_eq!(s.body.len(), 1);
        assert_eq!(s.stats, ClauseStats::default());
        assert_eq!(s.stable_since, 0);
        assert_eq!(s.specialized_at, 4);
        assert!(!s.refinements.contains_key(key));
        assert!(c.specialize("nope", 0).is_err());
    }

    #[test]
    fn firing_on_table_2a() {
        let b = Arc::new(bottom());
        let c = Clause::new(ClauseId::new(0, 0), HeadKind::Initiation, b.clone(), seed());
        let i = table_2a();
        let f = parse_term("moving(id1,id2)").unwrap();
        assert!(c.fires(&i, &f, 1).unwrap());
        let (fired, refs) = c.fires_with_refinements(&i, &f, 1).unwrap();
        assert!(fired);
        assert!(refs.iter().all(|&x| x));
        let d25 = c.specialize("distMoreThan(X0,X1,25,X2)", 0).unwrap();
        assert!(d25.fires(&i, &f, 1).unwrap());
        assert!(d25.fires(&i, &f, 2).unwrap());
    }
}
