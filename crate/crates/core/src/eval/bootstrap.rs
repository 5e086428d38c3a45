//! Paired bootstrap resampling over documents.
//!
//! Resample `r` draws its indices from a ChaCha8 stream seeded with the master
//! seed and stream number `r`, so resamples are independent of evaluation order
//! and the test runs in parallel with the same result as serially.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, MetricColumn};

pub const DEFAULT_ITERATIONS: usize = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_COMPARISONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub iterations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub comparisons: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            comparisons: DEFAULT_COMPARISONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub system_a: String,
    pub system_b: String,
    pub metric: String,
    pub iterations: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub comparisons: usize,
    pub significant: bool,
    pub seed: u64,
    pub mean_a: f64,
    pub mean_b: f64,
}

impl SignificanceReport {
    /// Bonferroni-corrected threshold `alpha / comparisons`.
    pub fn threshold(&self) -> f64 {
        self.alpha / self.comparisons as f64
    }
}

/// Whether `p` clears the corrected threshold.
pub fn is_significant(p: f64, alpha: f64, comparisons: usize) -> bool {
    p < alpha / comparisons as f64
}

/// Fraction of resamples in which `a` fails to beat `b`.
///
/// Each resample sums the paired differences `a_i - b_i` (negated when lower
/// is better) over the drawn indices; a sum `<= 0` counts against `a`.
pub fn paired_bootstrap_p(diffs: &[f64], iterations: usize, seed: u64) -> f64 {
    let n = diffs.len();
    let failures: usize = (0..iterations)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += diffs[rng.gen_range(0..n as u32) as usize];
            }
            usize::from(sum <= 0.0)
        })
        .sum();
    failures as f64 / iterations as f64
}

pub fn paired_bootstrap(
    system_a: &str,
    a: &MetricColumn,
    system_b: &str,
    b: &MetricColumn,
    opts: BootstrapOptions,
) -> Result<SignificanceReport, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::EmptyColumn(a.metric_name.clone()));
    }
    if a.higher_is_better != b.higher_is_better {
        return Err(EvalError::Invalid("columns disagree on metric direction".into()));
    }
    if opts.iterations == 0 {
        return Err(EvalError::Invalid("iterations must be at least 1".into()));
    }
    if opts.comparisons == 0 {
        return Err(EvalError::Invalid("comparisons must be at least 1".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(EvalError::Invalid(format!("alpha {} outside (0, 1)", opts.alpha)));
    }
    let sign = if a.higher_is_better { 1.0 } else { -1.0 };
    let diffs: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| sign * (x - y)).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(EvalError::NonFinite(a.metric_name.clone()));
    }
    let p_value = paired_bootstrap_p(&diffs, opts.iterations, opts.seed);
    Ok(SignificanceReport {
        system_a: system_a.to_string(),
        system_b: system_b.to_string(),
        metric: a.metric_name.clone(),
        iterations: opts.iterations,
        p_value,
        alpha: opts.alpha,
        comparisons: opts.comparisons,
        significant: is_significant(p_value, opts.alpha, opts.comparisons),
        seed: opts.seed,
        mean_a: super::ordered_mean(&a.values),
        mean_b: super::ordered_mean(&b.values),
    })
}
