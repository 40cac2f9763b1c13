mod common;

use common::*;
use ecl_core::clause::{ClauseId, HeadKind};
use ecl_core::scoring::{epsilon, g_score, hoeffding_decision, should_prune, ClauseStats, Decision, HoeffdingParams};
use proptest::prelude::*;

fn params() -> HoeffdingParams {
    HoeffdingParams::default()
}

#[test]
fn epsilon_values() {
    let e = epsilon(0.05, 1000).unwrap();
    assert!((e - 0.038703).abs() < 1e-6);
    assert!((epsilon(0.05, 4000).unwrap() - e / 2.0).abs() < 1e-12);
    assert!(epsilon(1.0 - 1e-12, 10).unwrap() < 1e-6);
    assert!(epsilon(0.05, 0).is_err());
}

#[test]
fn scores_follow_the_head_kind() {
    assert_eq!(g_score(&ClauseStats::new(3, 1, 0, 4), HeadKind::Initiation), 0.75);
    assert_eq!(g_score(&ClauseStats::new(3, 0, 3, 6), HeadKind::Termination), 0.5);
    for k in [HeadKind::Initiation, HeadKind::Termination] {
        assert_eq!(g_score(&ClauseStats::default(), k), 0.0);
    }
}

/// A clause with exactly two refinements scored `best` and `second`, and
/// the parent below both.
fn two_way(best: (u64, u64), second: (u64, u64), e: u64) -> ecl_core::clause::Clause {
    let mut c = table_clause(ClauseId::new(0, 0), HeadKind::Initiation);
    c.stats = ClauseStats::new(1, e - 1, 0, e);
    let keys: Vec<String> = c.refinements.keys().cloned().collect();
    assert!(keys.len() >= 2);
    for (i, k) in keys.iter().enumerate() {
        let r = c.refinements.get_mut(k).unwrap();
        r.stats = match i {
            0 => ClauseStats::new(best.0, best.1, 0, e),
            1 => ClauseStats::new(second.0, second.1, 0, e),
            _ => ClauseStats::new(0, 1, 0, e),
        };
    }
    c
}

#[test]
fn clear_winner_is_taken() {
    let c = two_way((900, 100), (700, 300), 1000);
    let first = c.refinements.keys().next().unwrap().clone();
    assert_eq!(hoeffding_decision(&c, &params()), Decision::Specialize(first));
}

#[test]
fn narrow_margin_on_few_examples_keeps() {
    let c = two_way((51, 49), (50, 50), 100);
    assert_eq!(hoeffding_decision(&c, &params()), Decision::Keep);
}

#[test]
fn parent_on_top_keeps() {
    let mut c = two_way((1, 999), (0, 1000), 1000);
    c.stats = ClauseStats::new(1000, 0, 0, 1000);
    assert_eq!(hoeffding_decision(&c, &params()), Decision::Keep);
}

#[test]
fn pruning_gates() {
    let low = ClauseStats::new(1, 9, 0, 10_000);
    let p = HoeffdingParams {
        prune_threshold: 0.5,
        ..params()
    };
    assert!(!should_prune(&low, HeadKind::Initiation, 10, Some(200.0), &p));
    assert!(should_prune(&low, HeadKind::Initiation, 5000, Some(200.0), &p));
    assert!(!should_prune(&low, HeadKind::Initiation, 5000, None, &p));
}

proptest! {
    #[test]
    fn epsilon_decreases(delta in 0.001f64..0.999, n in 1u64..1_000_000) {
        let a = epsilon(delta, n).unwrap();
        prop_assert!(epsilon(delta, n + 1).unwrap() < a);
        prop_assert!(epsilon((delta + 1.0) / 2.0, n).unwrap() < a);
    }

    #[test]
    fn scores_stay_in_unit_interval(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000) {
        for k in [HeadKind::Initiation, HeadKind::Termination] {
            let g = g_score(&ClauseStats::new(tp, fp, fn_, 1), k);
            prop_assert!((0.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn winner_never_scores_below_the_parent(
        parent in (0u64..100, 0u64..100),
        refs in prop::collection::vec((0u64..100, 0u64..100), 8),
        e in 1u64..5000,
    ) {
        let mut c = table_clause(ClauseId::new(0, 0), HeadKind::Initiation);
        c.stats = ClauseStats::new(parent.0, parent.1, 0, e);
        for (r, (tp, fp)) in c.refinements.values_mut().zip(refs.iter().cycle()) {
            r.stats = ClauseStats::new(*tp, *fp, 0, e);
        }
        let d = hoeffding_decision(&c, &params());
        let again = hoeffding_decision(&c.clone(), &params());
        prop_assert_eq!(&d, &again);
        if let Decision::Specialize(k) = d {
            let own = g_score(&c.stats, c.kind);
            prop_assert!(g_score(&c.refinements[&k].stats, c.kind) >= own);
        }
    }
}
