use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ec::{covers, Atom, Interpretation, Literal, Subst, Sym, Term, INITIATED_AT, TERMINATED_AT};

use super::modes::{ModeDeclaration, ModeSet, Placemark};
use super::{ClauseError, HeadKind};

/// The saturation of one seed example under the mode declarations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BottomClause {
    pub head: Atom,
    pub literals: Vec<Literal>,
}

impl fmt::Display for BottomClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        for (i, l) in self.literals.iter().enumerate() {
            f.write_str(if i == 0 { " :- " } else { ", " })?;
            write!(f, "{l}")?;
        }
        f.write_str(".")
    }
}

impl BottomClause {
    /// Variables of the head.
    pub fn head_vars(&self) -> Vec<Sym> {
        self.head.vars()
    }

    /// Whether `lit` may be appended to `body`: every variable it uses is a
    /// head variable, first appears in `lit` itself, or first appears in a
    /// bottom literal already present in `body`.
    pub fn connectable(&self, body: &[Literal], lit: &Literal) -> bool {
        let head = self.head_vars();
        let introducer = self.introducers();
        lit.vars().iter().all(|v| {
            head.contains(v)
                || match introducer.get(v) {
                    Some(&i) => &self.literals[i] == lit || body.contains(&self.literals[i]),
                    None => false,
                }
        })
    }

    fn introducers(&self) -> BTreeMap<Sym, usize> {
        let mut out = BTreeMap::new();
        for (i, l) in self.literals.iter().enumerate() {
            for v in l.vars() {
                out.entry(v).or_insert(i);
            }
        }
        out
    }
}

struct Saturation<'a> {
    interp: &'a Interpretation,
    modes: &'a ModeSet,
    /// constant -> variable
    vars: BTreeMap<Term, Term>,
    /// variable depth
    depth: BTreeMap<Term, usize>,
    /// typed constants in order of introduction
    known: BTreeMap<Sym, Vec<Term>>,
    literals: Vec<Literal>,
    seen: BTreeSet<Literal>,
}

impl<'a> Saturation<'a> {
    fn var_for(&mut self, c: &Term, depth: usize) -> Term {
        if let Some(v) = self.vars.get(c) {
            return v.clone();
        }
        let v = Term::var(&format!("X{}", self.vars.len()));
        self.vars.insert(c.clone(), v.clone());
        self.depth.insert(v.clone(), depth);
        v
    }

    fn learn_type(&mut self, ty: &Sym, c: &Term) {
        let list = self.known.entry(ty.clone()).or_default();
        if !list.contains(c) {
            list.push(c.clone());
        }
    }

    /// Tries to add the literal obtained from `schema` and the ground `fact`.
    fn offer(&mut self, mode: &ModeDeclaration, fact: &Atom, count: &mut usize) {
        if mode.recall.is_some_and(|r| *count >= r) {
            return;
        }
        let mut slots = Vec::new();
        if !mode
            .schema
            .args
            .iter()
            .zip(&fact.args)
            .all(|(s, g)| slot_match(s, g, &mut slots))
        {
            return;
        }
        let mut input_depth = 0;
        let mut inputs: Vec<(&Sym, &Term)> = Vec::new();
        for (p, c) in &slots {
            match p {
                Placemark::Input(ty) => {
                    if !self.known.get(ty).is_some_and(|k| k.contains(c)) {
                        return;
                    }
                    if inputs.iter().any(|(t, d)| *t == ty && *d == c) {
                        return;
                    }
                    inputs.push((ty, c));
                    input_depth = input_depth.max(self.depth[&self.vars[c]]);
                }
                Placemark::Output(_) => {
                    if !self.vars.contains_key(c) && input_depth + 1 > self.modes.max_depth {
                        return;
                    }
                }
                Placemark::Constant(_) => {}
            }
        }
        let mut subst = BTreeMap::new();
        for (p, c) in &slots {
            match p {
                Placemark::Input(_) => {
                    subst.insert(c.clone(), self.vars[c].clone());
                }
                Placemark::Output(ty) => {
                    let v = self.var_for(c, input_depth + 1);
                    self.learn_type(ty, c);
                    subst.insert(c.clone(), v);
                }
                Placemark::Constant(_) => {}
            }
        }
        let lit = Atom {
            pred: fact.pred.clone(),
            args: mode
                .schema
                .args
                .iter()
                .zip(&fact.args)
                .map(|(s, g)| variabilize(s, g, &subst))
                .collect(),
        };
        // The built-ins are symmetric in the two entities; keep one orientation.
        if crate::ec::is_builtin(&lit.pred) && lit.args.len() >= 2 {
            let mut swapped = lit.clone();
            swapped.args.swap(0, 1);
            if self.seen.contains(&swapped) {
                return;
            }
        }
        if self.seen.insert(lit.clone()) {
            self.literals.push(lit);
            *count += 1;
        }
    }

    fn saturate_mode(&mut self, mode: &ModeDeclaration, time: i64, count: &mut usize) {
        if crate::ec::is_builtin(&mode.schema.pred) {
            let mut slots = Vec::new();
            collect_slots(&mode.schema.args, &mut slots);
            let choices: Vec<Vec<Term>> = slots
                .iter()
                .map(|p| match p {
                    Placemark::Input(ty) => self.known.get(ty).cloned().unwrap_or_default(),
                    Placemark::Constant(ty) => self.modes.pools.get(ty).cloned().unwrap_or_default(),
                    Placemark::Output(_) => Vec::new(),
                })
                .collect();
            let mut pick = Vec::with_capacity(slots.len());
            let mut candidates = Vec::new();
            product(&choices, &mut pick, &mut candidates);
            for values in candidates {
                let mut it = values.iter();
                let fact = Atom {
                    pred: mode.schema.pred.clone(),
                    args: mode.schema.args.iter().map(|a| fill(a, &mut it)).collect(),
                };
                if covers(std::slice::from_ref(&fact), self.interp, time, &Subst::new()).unwrap_or(false) {
                    self.offer(mode, &fact, count);
                }
            }
        } else {
            let facts: Vec<Atom> = self.interp.facts_at(&mode.schema.pred, time).to_vec();
            for fact in facts.iter().filter(|f| f.args.len() == mode.schema.args.len()) {
                self.offer(mode, fact, count);
            }
        }
    }
}

fn slot_match(schema: &Term, ground: &Term, out: &mut Vec<(Placemark, Term)>) -> bool {
    if let Some(p) = Placemark::of(schema) {
        if !ground.is_ground() {
            return false;
        }
        out.push((p, ground.clone()));
        return true;
    }
    match (schema, ground) {
        (Term::Fn(f, xs), Term::Fn(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| slot_match(x, y, out))
        }
        (Term::Const(a), Term::Const(b)) => a == b,
        _ => false,
    }
}

fn collect_slots(args: &[Term], out: &mut Vec<Placemark>) {
    for a in args {
        if let Some(p) = Placemark::of(a) {
            out.push(p);
        } else if let Term::Fn(_, xs) = a {
            collect_slots(xs, out);
        }
    }
}

fn product(choices: &[Vec<Term>], pick: &mut Vec<Term>, out: &mut Vec<Vec<Term>>) {
    if pick.len() == choices.len() {
        out.push(pick.clone());
        return;
    }
    for c in &choices[pick.len()] {
        pick.push(c.clone());
        product(choices, pick, out);
        pick.pop();
    }
}

fn fill<'t>(schema: &Term, it: &mut impl Iterator<Item = &'t Term>) -> Term {
    if Placemark::of(schema).is_some() {
        return it.next().cloned().unwrap_or_else(|| schema.clone());
    }
    match schema {
        Term::Fn(f, args) => Term::Fn(f.clone(), args.iter().map(|a| fill(a, it)).collect()),
        other => other.clone(),
    }
}

fn variabilize(schema: &Term, ground: &Term, subst: &BTreeMap<Term, Term>) -> Term {
    match Placemark::of(schema) {
        Some(Placemark::Constant(_)) => ground.clone(),
        Some(_) => subst.get(ground).cloned().unwrap_or_else(|| ground.clone()),
        None => match (schema, ground) {
            (Term::Fn(f, xs), Term::Fn(_, ys)) => {
                Term::Fn(f.clone(), xs.iter().zip(ys).map(|(x, y)| variabilize(x, y, subst)).collect())
            }
            _ => ground.clone(),
        },
    }
}

/// Builds the bottom clause for `fluent` at `time` in `seed`.
pub fn construct_bottom(
    seed: &Interpretation,
    time: i64,
    fluent: &Term,
    kind: HeadKind,
    modes: &ModeSet,
) -> Result<BottomClause, ClauseError> {
    let head_mode = modes
        .head_for(kind, fluent)
        .ok_or_else(|| ClauseError::NoHeadMode(fluent.to_string()))?;
    let ground_head = Atom::new(
        match kind {
            HeadKind::Initiation => INITIATED_AT,
            HeadKind::Termination => TERMINATED_AT,
        },
        vec![fluent.clone(), Term::int(time)],
    );
    let mut sat = Saturation {
        interp: seed,
        modes,
        vars: BTreeMap::new(),
        depth: BTreeMap::new(),
        known: BTreeMap::new(),
        literals: Vec::new(),
        seen: BTreeSet::new(),
    };
    let mut slots = Vec::new();
    if !head_mode
        .schema
        .args
        .iter()
        .zip(&ground_head.args)
        .all(|(s, g)| slot_match(s, g, &mut slots))
    {
        return Err(ClauseError::NoHeadMode(fluent.to_string()));
    }
    let mut subst = BTreeMap::new();
    for (p, c) in &slots {
        if let Placemark::Input(ty) | Placemark::Output(ty) = p {
            let v = sat.var_for(c, 0);
            sat.learn_type(ty, c);
            subst.insert(c.clone(), v);
        }
    }
    let head = Atom {
        pred: ground_head.pred.clone(),
        args: head_mode
            .schema
            .args
            .iter()
            .zip(&ground_head.args)
            .map(|(s, g)| variabilize(s, g, &subst))
            .collect(),
    };
    let mut counts = vec![0usize; modes.bodies.len()];
    for _round in 0..=modes.max_depth {
        let before = sat.literals.len();
        for (i, mode) in modes.bodies.iter().enumerate() {
            sat.saturate_mode(mode, time, &mut counts[i]);
        }
        if sat.literals.len() == before {
            break;
        }
    }
    Ok(BottomClause {
        head,
        literals: sat.literals,
    })
}
