//! Clause statistics, G-scores, the Hoeffding specialization test and the
//! pruning rule.

use serde::{Deserialize, Serialize};

use crate::clause::{Clause, HeadKind};

/// Confusion counts of a clause plus the number of interpretations it was
/// evaluated on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClauseStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub e: u64,
}

impl ClauseStats {
    pub fn new(tp: u64, fp: u64, fn_: u64, e: u64) -> Self {
        ClauseStats { tp, fp, fn_, e }
    }

    /// Componentwise `self - prev`, or `None` if any counter went backwards.
    pub fn checked_delta(&self, prev: &ClauseStats) -> Option<ClauseStats> {
        Some(ClauseStats {
            tp: self.tp.checked_sub(prev.tp)?,
            fp: self.fp.checked_sub(prev.fp)?,
            fn_: self.fn_.checked_sub(prev.fn_)?,
            e: self.e.checked_sub(prev.e)?,
        })
    }

    pub fn add(&mut self, other: &ClauseStats) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.e += other.e;
    }
}

impl std::ops::Add for ClauseStats {
    type Output = ClauseStats;

    fn add(mut self, rhs: ClauseStats) -> ClauseStats {
        ClauseStats::add(&mut self, &rhs);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoeffdingParams {
    pub delta: f64,
    pub tie_threshold: f64,
    pub prune_threshold: f64,
    pub warm_up: u64,
}

impl Default for HoeffdingParams {
    fn default() -> Self {
        HoeffdingParams {
            delta: 0.05,
            tie_threshold: 0.05,
            prune_threshold: 0.3,
            warm_up: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("the Hoeffding bound needs at least one observation")]
    NoObservations,
    #[error("delta {0} is out of range")]
    BadDelta(f64),
    #[error("{name} must lie in [0, 1], got {value}")]
    BadThreshold { name: &'static str, value: f64 },
    #[error("warm-up must be positive")]
    BadWarmUp,
}

impl HoeffdingParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ScoringError::BadDelta(self.delta));
        }
        for (name, value) in [("tie threshold", self.tie_threshold), ("prune threshold", self.prune_threshold)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ScoringError::BadThreshold { name, value });
            }
        }
        if self.warm_up == 0 {
            return Err(ScoringError::BadWarmUp);
        }
        Ok(())
    }
}

/// Hoeffding error margin `sqrt(ln(1/delta) / 2n)` for a [0,1]-ranged mean.
pub fn epsilon(delta: f64, n: u64) -> Result<f64, ScoringError> {
    if n == 0 {
        return Err(ScoringError::NoObservations);
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ScoringError::BadDelta(delta));
    }
    Ok(((1.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Precision for initiation clauses, recall for termination clauses; 0 when
/// the clause has no relevant observations.
pub fn g_score(stats: &ClauseStats, kind: HeadKind) -> f64 {
    let denom = match kind {
        HeadKind::Initiation => stats.tp + stats.fp,
        HeadKind::Termination => stats.tp + stats.fn_,
    };
    if denom == 0 {
        0.0
    } else {
        stats.tp as f64 / denom as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Specialize(String),
}

struct Ranked<'a> {
    key: Option<&'a str>,
    score: f64,
    len: usize,
}

/// Orders candidates by score (desc), body length (asc), then key (asc),
/// with the clause itself keyed as the empty string.
fn rank(clause: &Clause) -> Vec<Ranked<'_>> {
    let mut all = vec![Ranked {
        key: None,
        score: g_score(&clause.stats, clause.kind),
        len: clause.body.len(),
    }];
    all.extend(clause.refinements.iter().map(|(k, r)| Ranked {
        key: Some(k.as_str()),
        score: g_score(&r.stats, clause.kind),
        len: clause.body.len() + 1,
    }));
    all.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.len.cmp(&b.len))
            .then(a.key.unwrap_or("").cmp(b.key.unwrap_or("")))
    });
    all
}

/// Specialize when the best candidate beats the runner-up by more than the
/// Hoeffding margin over `clause.stats.e` observations, or when the margin
/// has shrunk below the tie threshold. The clause competes with its own
/// specializations and is never replaced by a lower-scoring one.
pub fn hoeffding_decision(clause: &Clause, params: &HoeffdingParams) -> Decision {
    let ranked = rank(clause);
    let (Some(best), Some(second)) = (ranked.first(), ranked.get(1)) else {
        return Decision::Keep;
    };
    let Some(key) = best.key else {
        return Decision::Keep;
    };
    let Ok(eps) = epsilon(params.delta, clause.stats.e) else {
        return Decision::Keep;
    };
    if best.score - second.score > eps || eps < params.tie_threshold {
        Decision::Specialize(key.to_string())
    } else {
        Decision::Keep
    }
}

/// The clause has been stable for at least the average number of examples
/// that past specializations needed, and over that stable period its score
/// is confidently below the pruning threshold. Disabled until a first
/// specialization has been observed.
pub fn should_prune(
    stats: &ClauseStats,
    kind: HeadKind,
    stable_since: u64,
    avg_specialization_n: Option<f64>,
    params: &HoeffdingParams,
) -> bool {
    let Some(avg) = avg_specialization_n else {
        return false;
    };
    if (stable_since as f64) < avg {
        return false;
    }
    match epsilon(params.delta, stable_since) {
        Ok(eps) => g_score(stats, kind) + eps < params.prune_threshold,
        Err(_) => false,
    }
}

/// Running mean of the example counts at which specializations fired.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpecializationHistory {
    sum: f64,
    count: u64,
}

impl SpecializationHistory {
    pub fn record(&mut self, n: u64) {
        self.sum += n as f64;
        self.count += 1;
    }

    pub fn average(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent evaluation: ln(20) = 2.995732273553991,
    // sqrt(2.995732273553991 / 2000) = 0.038702921...
    #[test]
    fn epsilon_reference_value() {
        let e = epsilon(0.05, 1000).unwrap();
        assert!((e - 0.038703).abs() < 1e-6, "{e}");
    }

    #[test]
    fn epsilon_quarters_with_fourfold_n() {
        let a = epsilon(0.05, 1000).unwrap();
        let b = epsilon(0.05, 4000).unwrap();
        assert!((b - a / 2.0).abs() < 1e-15);
    }

    #[test]
    fn epsilon_vanishes_at_delta_one() {
        assert_eq!(epsilon(1.0, 17).unwrap(), 0.0);
    }

    #[test]
    fn epsilon_rejects_zero_n() {
        assert_eq!(epsilon(0.05, 0), Err(ScoringError::NoObservations));
    }

    #[test]
    fn g_scores() {
        let s = ClauseStats::new(3, 1, 0, 10);
        assert_eq!(g_score(&s, HeadKind::Initiation), 0.75);
        let s = ClauseStats::new(3, 0, 3, 10);
        assert_eq!(g_score(&s, HeadKind::Termination), 0.5);
        let z = ClauseStats::default();
        assert_eq!(g_score(&z, HeadKind::Initiation), 0.0);
        assert_eq!(g_score(&z, HeadKind::Termination), 0.0);
    }

    #[test]
    fn prune_gate_and_inequality() {
        let p = HoeffdingParams {
            prune_threshold: 0.5,
            ..HoeffdingParams::default()
        };
        let weak = ClauseStats::new(1, 9, 0, 10);
        assert!(!should_prune(&weak, HeadKind::Initiation, 10, Some(200.0), &p));
        assert!(!should_prune(&weak, HeadKind::Initiation, 5000, None, &p));
        let weak = ClauseStats::new(100, 900, 0, 5000);
        // eps(0.05, 5000) = 0.0173 < 0.4
        assert!(should_prune(&weak, HeadKind::Initiation, 5000, Some(200.0), &p));
        let strong = ClauseStats::new(900, 100, 0, 5000);
        assert!(!should_prune(&strong, HeadKind::Initiation, 5000, Some(200.0), &p));
    }

    #[test]
    fn history_average() {
        let mut h = SpecializationHistory::default();
        assert_eq!(h.average(), None);
        h.record(100);
        h.record(300);
        assert_eq!(h.average(), Some(200.0));
    }
}
