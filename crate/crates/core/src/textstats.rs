//! n-gram overlap between a test corpus and the in-domain corpus.
//!
//! Tokens are opaque integer ids; no tokenizer or normalization is applied
//! here.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// Orders that enter the overall (geometric-mean) overlap.
const OVERALL_MAX_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct NgramProfile {
    n_max: usize,
    /// `grams[n - 1]` holds the unique n-grams of order `n`.
    grams: Vec<HashSet<Vec<TokenId>>>,
    token_count: usize,
}

impl NgramProfile {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn order(&self, n: usize) -> &HashSet<Vec<TokenId>> {
        &self.grams[n - 1]
    }
}

/// Unique n-grams of every order `1..=n_max`, windowed within each
/// sequence (no n-gram spans two sequences).
///
/// # Panics
/// If `n_max == 0`.
pub fn build_profile<S: AsRef<[TokenId]> + Sync>(sequences: &[S], n_max: usize) -> NgramProfile {
    assert!(n_max >= 1, "n_max must be at least 1");
    let empty = || vec![HashSet::new(); n_max];
    let grams = sequences
        .par_iter()
        .fold(empty, |mut acc, seq| {
            let seq = seq.as_ref();
            for n in 1..=n_max {
                for w in seq.windows(n) {
                    acc[n - 1].insert(w.to_vec());
                }
            }
            acc
        })
        .reduce(empty, |mut a, b| {
            for (sa, sb) in a.iter_mut().zip(b) {
                if sa.len() < sb.len() {
                    let small = std::mem::replace(sa, sb);
                    sa.extend(small);
                } else {
                    sa.extend(sb);
                }
            }
            a
        });
    NgramProfile {
        n_max,
        grams,
        token_count: sequences.iter().map(|s| s.as_ref().len()).sum(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderOverlap {
    pub n: usize,
    pub test_unique: usize,
    pub train_unique: usize,
    pub shared: usize,
    /// Percentage of unique test n-grams also present in train.
    pub overlap_rate: f64,
    /// `100 · |test ∩ train| / |test ∪ train|`.
    pub jaccard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub orders: Vec<OrderOverlap>,
    /// Geometric mean of the overlap rates for orders `1..=4` (fewer if the
    /// profiles stop earlier). Zero when any of those rates is zero.
    pub overall: f64,
}

/// Test-relative overlap per order. Profiles with different `n_max` are
/// compared up to the smaller one.
pub fn overlap_report(test: &NgramProfile, train: &NgramProfile) -> OverlapReport {
    let n_max = test.n_max.min(train.n_max);
    let orders: Vec<OrderOverlap> = (1..=n_max)
        .map(|n| {
            let t = test.order(n);
            let r = train.order(n);
            let shared = t.iter().filter(|g| r.contains(*g)).count();
            let union = t.len() + r.len() - shared;
            OrderOverlap {
                n,
                test_unique: t.len(),
                train_unique: r.len(),
                shared,
                overlap_rate: percent(shared, t.len()),
                jaccard: percent(shared, union),
            }
        })
        .collect();
    let rates: Vec<f64> = orders
        .iter()
        .take(OVERALL_MAX_ORDER)
        .map(|o| o.overlap_rate)
        .collect();
    OverlapReport {
        overall: geometric_mean(&rates),
        orders,
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn geometric_mean(rates: &[f64]) -> f64 {
    if rates.is_empty() || rates.iter().any(|r| *r <= 0.0) {
        return 0.0;
    }
    (rates.iter().map(|r| r.ln()).sum::<f64>() / rates.len() as f64).exp()
}
