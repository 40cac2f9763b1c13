mod common;

use std::collections::BTreeSet;

use common::*;
use ecl_core::data::{generate, parse_stream, partition, render_stream, GeneratorConfig, KeyValues};
use ecl_core::experiment::evaluate;
use ecl_core::node::Theory;
use proptest::prelude::*;

fn small(seed: u64, noise: f64) -> GeneratorConfig {
    GeneratorConfig {
        horizon: 300,
        seed,
        noise_rate: noise,
        ..GeneratorConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partition_is_a_balanced_order_preserving_split(seed in 0u64..1000, k in 1usize..6) {
        let s = generate(&small(seed, 0.0)).unwrap().stream;
        let parts = partition(&s, k);
        prop_assert_eq!(parts.len(), k);
        let ids: Vec<Vec<u64>> = parts.iter().map(|p| p.iter().map(|i| i.id()).collect()).collect();
        for p in &ids {
            prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
        }
        let mut all: Vec<u64> = ids.concat();
        all.sort();
        prop_assert_eq!(all, s.iter().map(|i| i.id()).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let pos: Vec<usize> = parts.iter().map(|p| p.iter().filter(|i| i.has_positive()).count()).collect();
        prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
    }

    #[test]
    fn rendered_streams_parse_back(seed in 0u64..1000, chunk in 1usize..5) {
        let s = generate(&GeneratorConfig { chunk_size: chunk, ..small(seed, 0.05) }).unwrap().stream;
        let back = parse_stream(&render_stream(&s), 1, &targets()).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn ground_truth_explains_the_clean_stream() {
    for seed in 0..5 {
        let g = generate(&small(seed, 0.0)).unwrap();
        assert_eq!(g.stream, g.clean);
        assert!(g.flips.is_empty());
        let c = evaluate(&GeneratorConfig::default().ground_truth, &g.clean, &modes()).unwrap();
        assert!(c.tp > 0);
        assert_eq!((c.fp, c.fn_), (0, 0), "seed {seed}");
    }
}

#[test]
fn noise_drops_about_the_requested_fraction() {
    let cfg = GeneratorConfig {
        noise_rate: 0.1,
        seed: 3,
        ..GeneratorConfig::default()
    };
    let g = generate(&cfg).unwrap();
    let positives: BTreeSet<(String, i64)> = g
        .clean
        .iter()
        .flat_map(|i| i.annotation_atoms())
        .map(|a| (a.args[0].to_string(), a.time().unwrap()))
        .collect();
    let frac = g.flips.len() as f64 / positives.len() as f64;
    assert!((frac - 0.1).abs() < 0.03, "{frac}");
    assert!(g.flips.iter().all(|(f, t)| positives.contains(&(f.to_string(), *t))));
    assert_eq!(generate(&cfg).unwrap(), g);
    let clean = generate(&GeneratorConfig { noise_rate: 0.0, ..cfg }).unwrap();
    assert_eq!(clean.clean, g.clean);
}

#[test]
fn generator_reads_key_values() {
    let kv = KeyValues::parse("entities = 4\nhorizon = 50\nseed = 9\nnoise_rate = 0.2\n").unwrap();
    let cfg = GeneratorConfig::from_key_values(&kv).unwrap();
    assert_eq!(cfg.entities.len(), 4);
    assert_eq!((cfg.horizon, cfg.seed, cfg.noise_rate), (50, 9, 0.2));
    assert!(GeneratorConfig::from_key_values(&KeyValues::parse("noise_rate = 0.7\n").unwrap()).is_err());
    assert!(GeneratorConfig::from_key_values(&KeyValues::parse("colour = red\n").unwrap()).is_err());
}

#[test]
fn theories_round_trip_through_text() {
    let t = GeneratorConfig::default().ground_truth;
    assert_eq!(Theory::parse(&t.render()).unwrap().signature(), t.signature());
}
