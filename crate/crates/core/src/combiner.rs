//! Combining perplexity with OOD scores into a single abstention score.
//!
//! Two combiners: the sum of percentile ranks (PRsum) against a reference
//! population, and an ordinary least-squares fit that predicts quality from
//! named score columns. Every combined score is oriented so that a higher
//! value means "abstain first"; for the regression that is the negated
//! prediction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SpdMatrix};

/// Ridge added to each diagonal entry of the normal equations, relative to
/// that entry.
const NORMAL_EQUATION_RIDGE: f64 = 1e-10;

/// Sorted reference scores that percentile ranks are computed against.
#[derive(Clone, Debug, PartialEq)]
pub struct PercentileReference {
    sorted: Vec<f64>,
}

impl PercentileReference {
    pub fn new(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyInput);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(PercentileReference { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_scores(&self) -> &[f64] {
        &self.sorted
    }

    /// `PR(x) = R(x)/n · 100`, where `R(x)` counts reference scores below
    /// `x` plus the average position of any reference scores tied with it.
    /// Clamped below at `100/n`.
    pub fn percentile_rank(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        let below = self.sorted.partition_point(|&s| s < x);
        let through = self.sorted.partition_point(|&s| s <= x);
        let ties = through - below;
        let rank = if ties == 0 {
            below as f64
        } else {
            below as f64 + (ties as f64 + 1.0) / 2.0
        };
        let n = self.sorted.len() as f64;
        Ok(rank.max(1.0) / n * 100.0)
    }
}

/// `PR_perplexity + PR_ood`, in `(0, 200]`.
pub fn prsum(
    ref_ppx: &PercentileReference,
    ref_ood: &PercentileReference,
    ppx: f64,
    ood: f64,
) -> Result<f64> {
    Ok(ref_ppx.percentile_rank(ppx)? + ref_ood.percentile_rank(ood)?)
}

/// PRsum for whole columns, using each column itself as its reference
/// population.
pub fn prsum_pooled(ppx: &[f64], ood: &[f64]) -> Result<Vec<f64>> {
    if ppx.len() != ood.len() {
        return Err(Error::LengthMismatch {
            left: ppx.len(),
            right: ood.len(),
        });
    }
    let rp = PercentileReference::new(ppx)?;
    let ro = PercentileReference::new(ood)?;
    ppx.iter()
        .zip(ood)
        .map(|(&p, &o)| prsum(&rp, &ro, p, o))
        .collect()
}

/// Least-squares predictor of quality from named features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCombiner {
    pub intercept: f64,
    pub weights: BTreeMap<String, f64>,
    pub fit_rmse: f64,
}

impl LinearCombiner {
    /// Ordinary least squares of `quality` on the columns of `features`
    /// (one named column per feature) plus an intercept.
    pub fn fit(names: &[String], features: &Matrix, quality: &[f64]) -> Result<Self> {
        let n = features.nrows();
        let f = features.ncols();
        if names.len() != f {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: f,
            });
        }
        if f == 0 {
            return Err(Error::InvalidArgument(
                "at least one feature is required".into(),
            ));
        }
        if quality.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: quality.len(),
            });
        }
        if n <= f {
            return Err(Error::UnderDetermined {
                rows: n,
                features: f,
            });
        }
        if !features.all_finite() || quality.iter().any(|q| !q.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for name in names {
                if !seen.insert(name) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate feature `{name}`"
                    )));
                }
            }
        }

        // Centering folds the intercept out of the normal equations.
        let x_mean = linalg::mean(features)?;
        let y_mean = quality.iter().sum::<f64>() / n as f64;
        let mut gram = Matrix::zeros(f, f);
        let mut rhs = vec![0.0; f];
        let mut xc = vec![0.0; f];
        for (row, &y) in features.rows_iter().zip(quality) {
            for ((c, x), m) in xc.iter_mut().zip(row).zip(&x_mean) {
                *c = x - m;
            }
            let yc = y - y_mean;
            for i in 0..f {
                rhs[i] += xc[i] * yc;
                for j in i..f {
                    gram[(i, j)] += xc[i] * xc[j];
                }
            }
        }
        for i in 0..f {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        // A constant column has a zero diagonal; floor its ridge at the mean scale.
        let scale = gram.trace() / f as f64;
        if !(scale > 0.0) {
            return Err(Error::SingularDesign);
        }
        for i in 0..f {
            let g = gram[(i, i)];
            gram[(i, i)] += NORMAL_EQUATION_RIDGE * if g > 0.0 { g } else { scale };
        }
        let chol = SpdMatrix::new(gram)
            .and_then(|g| linalg::cholesky(&g))
            .map_err(|_| Error::SingularDesign)?;
        let beta = chol.solve(&rhs)?;
        let intercept = y_mean - linalg::dot(&beta, &x_mean);

        let mut combiner = LinearCombiner {
            intercept,
            weights: names.iter().cloned().zip(beta).collect(),
            fit_rmse: 0.0,
        };
        let sse: f64 = features
            .rows_iter()
            .zip(quality)
            .map(|(row, &y)| {
                let r = combiner.predict_ordered(names, row) - y;
                r * r
            })
            .sum();
        combiner.fit_rmse = (sse / n as f64).sqrt();
        Ok(combiner)
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    fn predict_ordered(&self, names: &[String], row: &[f64]) -> f64 {
        self.intercept
            + names
                .iter()
                .zip(row)
                .map(|(n, v)| self.weights[n] * v)
                .sum::<f64>()
    }

    /// Predicted quality for one example. Extra entries in `row` are ignored.
    pub fn apply(&self, row: &BTreeMap<String, f64>) -> Result<f64> {
        let mut acc = self.intercept;
        for (name, w) in &self.weights {
            let v = row
                .get(name)
                .ok_or_else(|| Error::MissingFeature(name.clone()))?;
            acc += w * v;
        }
        Ok(acc)
    }

    /// Abstention score: the negated predicted quality.
    pub fn abstention_score(&self, row: &BTreeMap<String, f64>) -> Result<f64> {
        self.apply(row).map(|q| -q)
    }
}
