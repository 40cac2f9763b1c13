//! First-order terms, substitutions and the one-step Event Calculus kernel.
//!
//! Everything here is plain immutable data. Learned clause bodies are
//! positive conjunctions of `happensAt/2`, context `holdsAt/2` and a small
//! set of built-in comparison predicates, so coverage reduces to a
//! depth-first search over an indexed narrative.

mod cover;
mod infer;
mod interpretation;
pub mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub(crate) use cover::covers;
pub use cover::{cover_body, is_builtin, CoverError, BUILTINS};
pub use infer::{step_infer, FluentState};
pub use interpretation::{Interpretation, InterpretationError};
pub use parse::{parse_atom, parse_term, ParseError};

/// Interned-ish symbol. Cheap to clone and `Send`.
pub type Sym = Arc<str>;

pub fn sym(s: &str) -> Sym {
    Arc::from(s)
}

pub const HAPPENS_AT: &str = "happensAt";
pub const HOLDS_AT: &str = "holdsAt";
pub const INITIATED_AT: &str = "initiatedAt";
pub const TERMINATED_AT: &str = "terminatedAt";

/// A term is a constant, a variable, or a one-level function term such as
/// `walk(id1)` or `coords(id1,201,454)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(Sym),
    Var(Sym),
    Fn(Sym, Vec<Term>),
}

impl Term {
    pub fn constant(s: &str) -> Term {
        Term::Const(sym(s))
    }

    pub fn var(s: &str) -> Term {
        Term::Var(sym(s))
    }

    pub fn int(v: i64) -> Term {
        Term::Const(sym(&v.to_string()))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Const(_) => true,
            Term::Var(_) => false,
            Term::Fn(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Term::Const(c) => c.parse().ok(),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Term::Const(c) => c.parse().ok(),
            _ => None,
        }
    }

    /// Functor name for function terms and constants.
    pub fn functor(&self) -> Option<&Sym> {
        match self {
            Term::Const(c) => Some(c),
            Term::Fn(f, _) => Some(f),
            Term::Var(_) => None,
        }
    }

    pub fn vars(&self, out: &mut Vec<Sym>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Const(_) => {}
            Term::Fn(_, args) => args.iter().for_each(|a| a.vars(out)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) | Term::Var(c) => f.write_str(c),
            Term::Fn(name, args) => {
                write!(f, "{name}(")?;
                write_args(f, args)?;
                f.write_str(")")
            }
        }
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Term]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

/// A predicate applied to arguments. Body literals are atoms as well; a
/// literal is either a narrative atom or a built-in comparison.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: Sym,
    pub args: Vec<Term>,
}

pub type Literal = Atom;

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Atom {
        Atom {
            pred: sym(pred),
            args,
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    /// The time stamp of a narrative or annotation atom (its last argument).
    pub fn time(&self) -> Option<i64> {
        self.args.last().and_then(Term::as_int)
    }

    pub fn vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.args.iter().for_each(|a| a.vars(&mut out));
        out
    }

    pub fn holds_at(fluent: Term, time: i64) -> Atom {
        Atom::new(HOLDS_AT, vec![fluent, Term::int(time)])
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            write_args(f, &self.args)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A mapping from variable names to terms. Ordered so that rendering and
/// iteration are deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subst(BTreeMap<Sym, Term>);

impl Subst {
    pub fn new() -> Subst {
        Subst::default()
    }

    pub fn get(&self, v: &str) -> Option<&Term> {
        self.0.get(v)
    }

    pub fn bind(&mut self, v: Sym, t: Term) {
        self.0.insert(v, t);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, &Term)> {
        self.0.iter()
    }

    /// Follow variable bindings until reaching a non-variable or an unbound
    /// variable.
    fn walk<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Var(v) = t {
            match self.0.get(v) {
                Some(next) if next != t => t = next,
                _ => break,
            }
        }
        t
    }

    pub fn apply(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Fn(f, args) => Term::Fn(f.clone(), args.iter().map(|a| self.apply(a)).collect()),
            other => other.clone(),
        }
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        Atom {
            pred: a.pred.clone(),
            args: a.args.iter().map(|t| self.apply(t)).collect(),
        }
    }
}

impl fmt::Display for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}->{t}")?;
        }
        f.write_str("}")
    }
}

fn occurs(v: &Sym, t: &Term, theta: &Subst) -> bool {
    match theta.walk(t) {
        Term::Var(w) => w == v,
        Term::Const(_) => false,
        Term::Fn(_, args) => args.iter().any(|a| occurs(v, a, theta)),
    }
}

pub fn unify_terms(a: &Term, b: &Term, theta: &mut Subst) -> bool {
    let a = theta.walk(a).clone();
    let b = theta.walk(b).clone();
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if occurs(x, t, theta) {
                return false;
            }
            theta.bind(x.clone(), t.clone());
            true
        }
        (Term::Const(x), Term::Const(y)) => x == y,
        (Term::Fn(f, xs), Term::Fn(g, ys)) => {
            f == g
                && xs.len() == ys.len()
                && xs.iter().zip(ys).all(|(x, y)| unify_terms(x, y, theta))
        }
        _ => false,
    }
}

/// Most general extension of `theta` unifying `a` and `b`, or `None`.
pub fn unify(a: &Atom, b: &Atom, theta: &Subst) -> Option<Subst> {
    if a.pred != b.pred || a.args.len() != b.args.len() {
        return None;
    }
    let mut out = theta.clone();
    a.args
        .iter()
        .zip(&b.args)
        .all(|(x, y)| unify_terms(x, y, &mut out))
        .then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(s: &str) -> Atom {
        parse_atom(s).unwrap()
    }

    #[test]
    fn unify_binds_nested_variables() {
        let theta = unify(
            &atom("happensAt(walk(X),T)"),
            &atom("happensAt(walk(id1),1)"),
            &Subst::new(),
        )
        .unwrap();
        assert_eq!(theta.get("X"), Some(&Term::constant("id1")));
        assert_eq!(theta.get("T"), Some(&Term::int(1)));
        assert_eq!(theta.len(), 2);
    }

    #[test]
    fn unify_fails_on_inner_functor_clash() {
        assert!(unify(
            &atom("happensAt(walk(X),T)"),
            &atom("happensAt(inactive(id1),1)"),
            &Subst::new()
        )
        .is_none());
    }

    #[test]
    fn unify_fails_on_repeated_variable() {
        assert!(unify(&atom("p(X,X)"), &atom("p(a,b)"), &Subst::new()).is_none());
        assert!(unify(&atom("p(X,X)"), &atom("p(a,a)"), &Subst::new()).is_some());
    }

    #[test]
    fn unify_respects_existing_bindings() {
        let mut theta = Subst::new();
        theta.bind(sym("X"), Term::constant("id2"));
        assert!(unify(&atom("walk(X)"), &atom("walk(id1)"), &theta).is_none());
    }

    #[test]
    fn occurs_check() {
        let mut theta = Subst::new();
        assert!(!unify_terms(
            &Term::var("X"),
            &Term::Fn(sym("f"), vec![Term::var("X")]),
            &mut theta
        ));
    }

    #[test]
    fn ground_check() {
        assert!(atom("holdsAt(coords(id1,201,454),1)").is_ground());
        assert!(!atom("holdsAt(coords(X,201,454),1)").is_ground());
    }
}
