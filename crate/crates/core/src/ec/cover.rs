use std::ops::ControlFlow;

use super::{unify, Atom, Interpretation, Subst, Term};

/// Built-in comparison predicates evaluated from context `holdsAt` facts.
pub const BUILTINS: [&str; 3] = ["distLessThan", "distMoreThan", "dirLessThan"];

pub fn is_builtin(pred: &str) -> bool {
    BUILTINS.contains(&pred)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoverError {
    #[error("built-in {0} evaluated with unbound arguments")]
    Unbound(String),
    #[error("built-in {0} has malformed arguments")]
    Malformed(String),
}

fn euclidean(a: &[Term], b: &[Term]) -> Option<f64> {
    let (x1, y1) = (a.first()?.as_f64()?, a.get(1)?.as_f64()?);
    let (x2, y2) = (b.first()?.as_f64()?, b.get(1)?.as_f64()?);
    Some(((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt())
}

fn angle_gap(a: &[Term], b: &[Term]) -> Option<f64> {
    let d = (a.first()?.as_f64()? - b.first()?.as_f64()?).abs() % 360.0;
    Some(d.min(360.0 - d))
}

/// Evaluates a built-in literal that has already been instantiated.
fn eval_builtin(lit: &Atom, interp: &Interpretation) -> Result<bool, CoverError> {
    if !lit.is_ground() {
        return Err(CoverError::Unbound(lit.to_string()));
    }
    let malformed = || CoverError::Malformed(lit.to_string());
    let [x, y, threshold, t] = lit.args.as_slice() else {
        return Err(malformed());
    };
    let threshold = threshold.as_f64().ok_or_else(malformed)?;
    let t = t.as_int().ok_or_else(malformed)?;
    let (functor, test): (&str, fn(f64, f64) -> bool) = match lit.pred.as_ref() {
        "distLessThan" => ("coords", |v, th| v < th),
        "distMoreThan" => ("coords", |v, th| v > th),
        "dirLessThan" => ("direction", |v, th| v < th),
        _ => return Err(malformed()),
    };
    let (Some(a), Some(b)) = (interp.context(functor, x, t), interp.context(functor, y, t)) else {
        return Ok(false);
    };
    let value = if functor == "coords" { euclidean(a, b) } else { angle_gap(a, b) };
    Ok(value.is_some_and(|v| test(v, threshold)))
}

fn search(
    body: &[Atom],
    interp: &Interpretation,
    time: i64,
    theta: Subst,
    visit: &mut dyn FnMut(Subst) -> ControlFlow<()>,
) -> Result<ControlFlow<()>, CoverError> {
    let Some((lit, rest)) = body.split_first() else {
        return Ok(visit(theta));
    };
    if is_builtin(&lit.pred) {
        if eval_builtin(&theta.apply_atom(lit), interp)? {
            return search(rest, interp, time, theta, visit);
        }
        return Ok(ControlFlow::Continue(()));
    }
    let bound = theta.apply_atom(lit);
    let t = bound.time().unwrap_or(time);
    for fact in interp.facts_at(&lit.pred, t) {
        if let Some(ext) = unify(&bound, fact, &theta) {
            if search(rest, interp, time, ext, visit)?.is_break() {
                return Ok(ControlFlow::Break(()));
            }
        }
    }
    Ok(ControlFlow::Continue(()))
}

/// All substitutions extending `theta` that ground `body` in `interp`.
///
/// Narrative literals whose time argument is unbound are looked up at
/// `time`. An empty body yields exactly `theta`.
pub fn cover_body(body: &[Atom], interp: &Interpretation, time: i64, theta: &Subst) -> Result<Vec<Subst>, CoverError> {
    let mut out = Vec::new();
    let _ = search(body, interp, time, theta.clone(), &mut |s| {
        if !out.contains(&s) {
            out.push(s);
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// Whether any grounding of `body` extends `theta`; stops at the first one.
pub(crate) fn covers(body: &[Atom], interp: &Interpretation, time: i64, theta: &Subst) -> Result<bool, CoverError> {
    Ok(search(body, interp, time, theta.clone(), &mut |_| ControlFlow::Break(()))?.is_break())
}
