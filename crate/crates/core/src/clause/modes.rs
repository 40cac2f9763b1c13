//! Mode declarations and constant pools.
//!
//! File grammar, one declaration per line (terms as in [`crate::ec::parse`]):
//!
//! ```text
//! modeh(initiatedAt(moving(+person,+person),+time)).
//! modeb(happensAt(walk(+person),+time)).
//! modeb(2, distLessThan(+person,+person,#dist,+time)).   % optional recall, `*` = unbounded
//! pool(dist, [25,30,40]).
//! depth(1).                                              % optional variable-depth bound
//! ```
//!
//! `+t` marks an input variable of type `t`, `-t` an output variable and
//! `#t` a constant drawn from `pool(t, ...)`.

use std::collections::{BTreeMap, BTreeSet};

use crate::ec::parse::{Parser, LIST_FUNCTOR};
use crate::ec::{Atom, Interpretation, ParseError, Sym, Term, INITIATED_AT, TERMINATED_AT};

use super::HeadKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModeError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("constant type #{0} has no non-empty pool")]
    MissingPool(String),
    #[error("no head mode declared")]
    NoHeadMode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Placemark {
    Input(Sym),
    Output(Sym),
    Constant(Sym),
}

impl Placemark {
    pub fn of(t: &Term) -> Option<Placemark> {
        let Term::Const(c) = t else { return None };
        let ty = || Sym::from(&c[1..]);
        match c.as_bytes().first()? {
            b'+' => Some(Placemark::Input(ty())),
            b'-' if c.len() > 1 && !c.as_bytes()[1].is_ascii_digit() => Some(Placemark::Output(ty())),
            b'#' => Some(Placemark::Constant(ty())),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    Head,
    Body,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeDeclaration {
    pub kind: ModeKind,
    pub schema: Atom,
    /// Maximum instances of this schema in a bottom clause; `None` is unbounded.
    pub recall: Option<usize>,
}

impl ModeDeclaration {
    /// For head modes: the head kind and the fluent schema.
    pub fn head_parts(&self) -> Option<(HeadKind, &Term)> {
        let kind = match self.schema.pred.as_ref() {
            INITIATED_AT => HeadKind::Initiation,
            TERMINATED_AT => HeadKind::Termination,
            _ => return None,
        };
        Some((kind, self.schema.args.first()?))
    }
}

pub type TypeDomains = BTreeMap<Sym, BTreeSet<Term>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSet {
    pub heads: Vec<ModeDeclaration>,
    pub bodies: Vec<ModeDeclaration>,
    pub pools: BTreeMap<Sym, Vec<Term>>,
    pub max_depth: usize,
}

fn walk_placemarks<'a>(t: &'a Term, out: &mut Vec<(Placemark, &'a Term)>) {
    if let Some(p) = Placemark::of(t) {
        out.push((p, t));
    } else if let Term::Fn(_, args) = t {
        args.iter().for_each(|a| walk_placemarks(a, out));
    }
}

/// Matches a ground term against a schema, collecting `(type, constant)`
/// pairs for input/output slots.
pub(crate) fn match_schema(schema: &Term, ground: &Term, out: &mut Vec<(Sym, Term)>) -> bool {
    match Placemark::of(schema) {
        Some(Placemark::Input(ty)) | Some(Placemark::Output(ty)) => {
            out.push((ty, ground.clone()));
            true
        }
        Some(Placemark::Constant(_)) => ground.is_ground(),
        None => match (schema, ground) {
            (Term::Fn(f, xs), Term::Fn(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| match_schema(x, y, out))
            }
            (Term::Const(a), Term::Const(b)) => a == b,
            _ => false,
        },
    }
}

impl ModeSet {
    pub fn parse(src: &str) -> Result<ModeSet, ModeError> {
        let mut set = ModeSet {
            heads: Vec::new(),
            bodies: Vec::new(),
            pools: BTreeMap::new(),
            max_depth: 1,
        };
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            let mut p = Parser::new(raw);
            if p.at_end() {
                continue;
            }
            let decl = p.atom().and_then(|a| p.expect(b'.').map(|_| a));
            let decl = decl.map_err(|source| ModeError::Parse { line, source })?;
            if !p.at_end() {
                return Err(ModeError::Invalid {
                    line,
                    message: "trailing input after declaration".into(),
                });
            }
            let invalid = |message: &str| ModeError::Invalid {
                line,
                message: message.to_string(),
            };
            match (decl.pred.as_ref(), decl.args.as_slice()) {
                ("modeh" | "modeb", args) if !args.is_empty() && args.len() <= 2 => {
                    let (recall, schema) = if args.len() == 2 {
                        let recall = match &args[0] {
                            Term::Const(c) if c.as_ref() == "*" => None,
                            t => Some(t.as_int().filter(|r| *r > 0).ok_or_else(|| invalid("recall must be a positive integer or *"))? as usize),
                        };
                        (recall, &args[1])
                    } else {
                        (None, &args[0])
                    };
                    let schema = match schema {
                        Term::Fn(f, a) => Atom {
                            pred: f.clone(),
                            args: a.clone(),
                        },
                        _ => return Err(invalid("mode schema must be a compound atom")),
                    };
                    if decl.pred.as_ref() == "modeh" {
                        let m = ModeDeclaration {
                            kind: ModeKind::Head,
                            schema,
                            recall,
                        };
                        if m.head_parts().is_none() {
                            return Err(invalid("head modes must use initiatedAt/2 or terminatedAt/2"));
                        }
                        set.heads.push(m);
                    } else {
                        set.bodies.push(ModeDeclaration {
                            kind: ModeKind::Body,
                            schema,
                            recall,
                        });
                    }
                }
                ("pool", [Term::Const(name), Term::Fn(list, items)]) if list.as_ref() == LIST_FUNCTOR => {
                    if items.iter().any(|t| !matches!(t, Term::Const(_))) {
                        return Err(invalid("pool values must be constants"));
                    }
                    set.pools.insert(name.clone(), items.clone());
                }
                ("depth", [d]) => {
                    set.max_depth = d.as_int().filter(|d| *d >= 0).ok_or_else(|| invalid("depth must be a non-negative integer"))? as usize;
                }
                _ => return Err(invalid("expected modeh/1-2, modeb/1-2, pool/2 or depth/1")),
            }
        }
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), ModeError> {
        if self.heads.is_empty() {
            return Err(ModeError::NoHeadMode);
        }
        for m in self.heads.iter().chain(&self.bodies) {
            let mut marks = Vec::new();
            m.schema.args.iter().for_each(|a| walk_placemarks(a, &mut marks));
            for (p, _) in marks {
                if let Placemark::Constant(ty) = p {
                    if self.pools.get(&ty).is_none_or(Vec::is_empty) {
                        return Err(ModeError::MissingPool(ty.to_string()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn head_modes(&self, kind: HeadKind) -> impl Iterator<Item = &ModeDeclaration> {
        self.heads.iter().filter(move |m| m.head_parts().map(|(k, _)| k) == Some(kind))
    }

    /// The head mode whose fluent schema matches a ground fluent.
    pub fn head_for(&self, kind: HeadKind, fluent: &Term) -> Option<&ModeDeclaration> {
        self.head_modes(kind)
            .find(|m| match_schema(m.head_parts().unwrap().1, fluent, &mut Vec::new()))
    }

    /// Functor names of all target (complex-event) fluents.
    pub fn target_functors(&self) -> BTreeSet<Sym> {
        self.heads
            .iter()
            .filter_map(|m| m.head_parts()?.1.functor().cloned())
            .collect()
    }

    /// Typed constants of an interpretation, read off narrative atoms that
    /// match a body mode.
    pub fn type_domains(&self, interp: &Interpretation) -> TypeDomains {
        let mut domains = TypeDomains::new();
        for atom in interp.narrative() {
            for m in self.bodies.iter().filter(|m| m.schema.pred == atom.pred && m.schema.args.len() == atom.args.len()) {
                let mut typed = Vec::new();
                if m.schema.args.iter().zip(&atom.args).all(|(s, g)| match_schema(s, g, &mut typed)) {
                    for (ty, c) in typed {
                        domains.entry(ty).or_default().insert(c);
                    }
                }
            }
        }
        domains
    }

    /// Ground target fluents a clause head of `kind` may fire on: the fluent
    /// schema instantiated over the typed domains, with distinct slots taking
    /// distinct constants.
    pub fn head_groundings(&self, kind: HeadKind, domains: &TypeDomains) -> Vec<Term> {
        let mut out = Vec::new();
        for m in self.head_modes(kind) {
            let fluent = m.head_parts().unwrap().1;
            let mut marks = Vec::new();
            walk_placemarks(fluent, &mut marks);
            let mut choice: Vec<Term> = Vec::with_capacity(marks.len());
            enumerate(fluent, &marks, domains, &mut choice, &mut out);
        }
        out.sort();
        out.dedup();
        out
    }
}

fn enumerate(
    schema: &Term,
    marks: &[(Placemark, &Term)],
    domains: &TypeDomains,
    choice: &mut Vec<Term>,
    out: &mut Vec<Term>,
) {
    if choice.len() == marks.len() {
        let mut it = choice.iter();
        out.push(fill(schema, &mut it));
        return;
    }
    let (Placemark::Input(ty) | Placemark::Output(ty) | Placemark::Constant(ty)) = &marks[choice.len()].0;
    let Some(dom) = domains.get(ty) else { return };
    for c in dom {
        if choice.contains(c) {
            continue;
        }
        choice.push(c.clone());
        enumerate(schema, marks, domains, choice, out);
        choice.pop();
    }
}

fn fill<'a>(schema: &Term, it: &mut impl Iterator<Item = &'a Term>) -> Term {
    if Placemark::of(schema).is_some() {
        return it.next().cloned().expect("one value per placemark");
    }
    match schema {
        Term::Fn(f, args) => Term::Fn(f.clone(), args.iter().map(|a| fill(a, it)).collect()),
        other => other.clone(),
    }
}
