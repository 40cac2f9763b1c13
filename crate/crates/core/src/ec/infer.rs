use std::collections::BTreeSet;

use super::Term;

/// Ground target fluents holding at one time point.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FluentState(pub BTreeSet<Term>);

impl FluentState {
    pub fn holds(&self, f: &Term) -> bool {
        self.0.contains(f)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<Term> for FluentState {
    fn from_iter<I: IntoIterator<Item = Term>>(iter: I) -> Self {
        FluentState(iter.into_iter().collect())
    }
}

/// One step of the inertia axioms: a fluent holds at `T+1` if it was
/// initiated at `T`, or if it held at `T` and was not terminated.
///
/// A fluent both initiated and terminated at `T` holds at `T+1`.
pub fn step_infer(prev: &FluentState, initiated: &BTreeSet<Term>, terminated: &BTreeSet<Term>) -> FluentState {
    let mut next: BTreeSet<Term> = prev.0.difference(terminated).cloned().collect();
    next.extend(initiated.iter().cloned());
    FluentState(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::parse_term;

    fn set(xs: &[&str]) -> BTreeSet<Term> {
        xs.iter().map(|s| parse_term(s).unwrap()).collect()
    }

    #[test]
    fn initiation_makes_fluent_hold() {
        let next = step_infer(&FluentState::default(), &set(&["moving(id1,id2)"]), &set(&[]));
        assert_eq!(next.0, set(&["moving(id1,id2)"]));
    }

    #[test]
    fn inertia_preserves_fluent() {
        let prev = FluentState(set(&["moving(id1,id2)"]));
        assert_eq!(step_infer(&prev, &set(&[]), &set(&[])), prev);
    }

    #[test]
    fn termination_of_absent_fluent_is_noop() {
        let next = step_infer(&FluentState::default(), &set(&[]), &set(&["moving(id1,id2)"]));
        assert!(next.is_empty());
    }

    #[test]
    fn initiation_wins_ties() {
        let f = set(&["moving(id1,id2)"]);
        assert_eq!(step_infer(&FluentState::default(), &f, &f).0, f);
        assert_eq!(step_infer(&FluentState(f.clone()), &f, &f).0, f);
    }
}
