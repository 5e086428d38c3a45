use serde::Deserialize;
use sumrank::eval::{paired_bootstrap, BootstrapOptions, MetricColumn};

#[derive(Deserialize)]
struct Vector {
    seed: u64,
    iterations: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn vector() -> Vector {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/bootstrap_pairs.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Recorded from the first seeded run.
const GOLDEN_P: f64 = 0.1966;

/// Independent 100k-resample estimate with a different generator.
const REFERENCE_P: f64 = 0.20041;

fn run() -> f64 {
    let v = vector();
    let a = MetricColumn::new("m", v.a, true, "g");
    let b = MetricColumn::new("m", v.b, true, "g");
    let opts = BootstrapOptions {
        iterations: v.iterations,
        seed: v.seed,
        ..BootstrapOptions::default()
    };
    paired_bootstrap("a", &a, "b", &b, opts).unwrap().p_value
}

#[test]
fn seeded_p_value_is_frozen() {
    let v = vector();
    assert_eq!((v.a.len(), v.seed, v.iterations), (200, 42, 10_000));
    let p = run();
    assert_eq!(p.to_bits(), GOLDEN_P.to_bits(), "p = {p:?}");
}

#[test]
fn seeded_p_value_agrees_with_reference_estimate() {
    assert!((run() - REFERENCE_P).abs() < 0.015);
}
