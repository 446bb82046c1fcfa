//! Discriminative OOD baselines.
//!
//! [`train_logistic`] fits an L2-penalized logistic regression separating
//! background (label 1) from in-domain (label 0) embeddings by IRLS; its
//! raw logit is the OOD score. [`KnnIndex`] scores a query by its distance
//! to the k-th nearest normalized training embedding.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, EmbeddingMatrix, Matrix, SpdMatrix};
use crate::rng::SplitMix64;
use crate::OodScorer;

pub const DEFAULT_L2: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_KNN_K: usize = 1000;
pub const DEFAULT_KNN_ALPHA: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryClassifier {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub l2: f64,
    pub n_iter: usize,
    pub converged: bool,
}

impl BinaryClassifier {
    /// Un-normalized logit `β₀ + β₁·x`. Higher means more background-like.
    pub fn logit_score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(self.intercept + dot(&self.weights, x))
    }
}

impl OodScorer for BinaryClassifier {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        self.logit_score(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Seed for downsampling the larger class to the size of the smaller
    /// one. `None` trains on the classes as given.
    pub balance_seed: Option<u64>,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: DEFAULT_L2,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            balance_seed: Some(0),
        }
    }
}

/// Objective value after each accepted IRLS step (index 0 is the start point).
#[derive(Clone, Debug, Default)]
pub struct TrainingTrace {
    pub objective: Vec<f64>,
}

/// Trains on `pos` (background, label 1) versus `neg` (in-domain, label 0).
///
/// Minimizes mean logistic loss plus `l2/2 · ‖β₁‖²` (intercept
/// unpenalized) by damped Newton/IRLS. A model that hits `max_iter` is
/// returned with `converged == false`.
pub fn train_logistic(
    pos: &EmbeddingMatrix,
    neg: &EmbeddingMatrix,
    config: &LogisticConfig,
) -> Result<BinaryClassifier> {
    train_logistic_traced(pos, neg, config).map(|(c, _)| c)
}

pub fn train_logistic_traced(
    pos: &EmbeddingMatrix,
    neg: &EmbeddingMatrix,
    config: &LogisticConfig,
) -> Result<(BinaryClassifier, TrainingTrace)> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(pos.ncols(), neg.ncols())?;
    if !(config.l2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "l2 must be > 0, got {}",
            config.l2
        )));
    }
    if !pos.all_finite() || !neg.all_finite() {
        return Err(Error::NonFiniteInput);
    }

    let (pos, neg) = match config.balance_seed {
        Some(seed) => balance(pos, neg, seed),
        None => (pos.clone(), neg.clone()),
    };
    let problem = Problem::new(&pos, &neg, config.l2);
    let p = problem.d + 1;

    let mut beta = vec![0.0; p];
    let mut obj = problem.objective(&beta);
    let mut trace = TrainingTrace {
        objective: vec![obj],
    };
    let mut n_iter = 0;
    let mut converged = false;

    loop {
        let (grad, hess) = problem.gradient_hessian(&beta);
        if max_abs(&grad) < config.tol {
            converged = true;
            break;
        }
        if n_iter >= config.max_iter {
            break;
        }
        let Some(step) = newton_step(hess, &grad) else {
            break;
        };
        // Halve until the objective does not increase.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            let cand_obj = problem.objective(&cand);
            if cand_obj <= obj {
                accepted = Some((cand, cand_obj));
                break;
            }
            t *= 0.5;
        }
        n_iter += 1;
        match accepted {
            Some((cand, cand_obj)) => {
                beta = cand;
                obj = cand_obj;
                trace.objective.push(obj);
            }
            None => break,
        }
    }

    Ok((
        BinaryClassifier {
            intercept: beta[0],
            weights: beta[1..].to_vec(),
            l2: config.l2,
            n_iter,
            converged,
        },
        trace,
    ))
}

fn balance(pos: &Matrix, neg: &Matrix, seed: u64) -> (Matrix, Matrix) {
    let target = pos.nrows().min(neg.nrows());
    let shrink = |m: &Matrix, stream: u64| {
        if m.nrows() == target {
            return m.clone();
        }
        let mut idx = SplitMix64::derive(seed, stream).sample_indices(m.nrows(), target);
        idx.sort_unstable();
        m.select_rows(&idx)
    };
    (shrink(pos, 1), shrink(neg, 2))
}

struct Problem<'a> {
    pos: &'a Matrix,
    neg: &'a Matrix,
    l2: f64,
    d: usize,
    n: f64,
}

impl<'a> Problem<'a> {
    fn new(pos: &'a Matrix, neg: &'a Matrix, l2: f64) -> Self {
        Problem {
            pos,
            neg,
            l2,
            d: pos.ncols(),
            n: (pos.nrows() + neg.nrows()) as f64,
        }
    }

    fn labelled(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.pos
            .rows_iter()
            .map(|r| (r, 1.0))
            .chain(self.neg.rows_iter().map(|r| (r, 0.0)))
    }

    fn objective(&self, beta: &[f64]) -> f64 {
        let loss: f64 = self
            .labelled()
            .map(|(x, y)| {
                let eta = beta[0] + dot(&beta[1..], x);
                softplus(eta) - y * eta
            })
            .sum();
        loss / self.n + 0.5 * self.l2 * beta[1..].iter().map(|w| w * w).sum::<f64>()
    }

    fn gradient_hessian(&self, beta: &[f64]) -> (Vec<f64>, Matrix) {
        let p = self.d + 1;
        let mut grad = vec![0.0; p];
        let mut hess = Matrix::zeros(p, p);
        let mut xa = vec![0.0; p];
        for (x, y) in self.labelled() {
            xa[0] = 1.0;
            xa[1..].copy_from_slice(x);
            let prob = sigmoid(beta[0] + dot(&beta[1..], x));
            let r = prob - y;
            let w = prob * (1.0 - prob);
            for i in 0..p {
                grad[i] += r * xa[i];
                let wi = w * xa[i];
                for j in i..p {
                    hess[(i, j)] += wi * xa[j];
                }
            }
        }
        for g in grad.iter_mut() {
            *g /= self.n;
        }
        for i in 0..p {
            for j in i..p {
                let v = hess[(i, j)] / self.n;
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        for i in 1..p {
            grad[i] += self.l2 * beta[i];
            hess[(i, i)] += self.l2;
        }
        (grad, hess)
    }
}

fn newton_step(hess: Matrix, grad: &[f64]) -> Option<Vec<f64>> {
    let spd = SpdMatrix::new(hess.clone()).ok()?;
    if let Ok(chol) = linalg::cholesky(&spd) {
        return chol.solve(grad).ok();
    }
    // All curvature on the intercept can vanish on separated data.
    let mut jittered = hess;
    let p = jittered.nrows();
    for i in 0..p {
        jittered[(i, i)] += 1e-12;
    }
    let chol = linalg::cholesky(&SpdMatrix::new(jittered).ok()?).ok()?;
    chol.solve(grad).ok()
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Exact brute-force KNN distance scorer over unit-normalized embeddings.
#[derive(Clone, Debug)]
pub struct KnnIndex {
    rows: Matrix,
    k: usize,
    alpha_pct: f64,
}

impl KnnIndex {
    /// Normalizes and stores `rows`. `alpha_pct` is the percentage of the
    /// stored rows sampled per query (100 = all of them).
    pub fn new(rows: &EmbeddingMatrix, k: usize, alpha_pct: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if k > rows.nrows() {
            return Err(Error::KTooLarge {
                k,
                available: rows.nrows(),
            });
        }
        if !(alpha_pct > 0.0 && alpha_pct <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0, 100], got {alpha_pct}"
            )));
        }
        let mut stored = rows.clone();
        for i in 0..stored.nrows() {
            normalize_in_place(stored.row_mut(i))?;
        }
        Ok(KnnIndex {
            rows: stored,
            k,
            alpha_pct,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha_pct(&self) -> f64 {
        self.alpha_pct
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn stored(&self) -> &Matrix {
        &self.rows
    }

    /// Row indices used for a query with `seed`. Full set at α = 100.
    pub fn subsample(&self, seed: u64) -> Vec<usize> {
        let n = self.rows.nrows();
        if self.alpha_pct >= 100.0 {
            return (0..n).collect();
        }
        let m = ((self.alpha_pct / 100.0) * n as f64).ceil() as usize;
        let mut idx = SplitMix64::new(seed).sample_indices(n, m.clamp(1, n));
        idx.sort_unstable();
        idx
    }

    /// Distance from normalized `x` to its k-th nearest stored row.
    pub fn knn_score(&self, x: &[f64], seed: u64) -> Result<f64> {
        let subset = self.subsample(seed);
        self.score_against(x, &subset)
    }

    /// Scores every row against one shared subsample, preserving order.
    pub fn batch_score(&self, rows: &EmbeddingMatrix, seed: u64) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let subset = self.subsample(seed);
        (0..rows.nrows())
            .into_par_iter()
            .map(|i| self.score_against(rows.row(i), &subset))
            .collect()
    }

    fn score_against(&self, x: &[f64], subset: &[usize]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if self.k > subset.len() {
            return Err(Error::KTooLarge {
                k: self.k,
                available: subset.len(),
            });
        }
        let mut q = x.to_vec();
        normalize_in_place(&mut q)?;
        let mut dists: Vec<f64> = subset
            .iter()
            .map(|&i| euclidean(&q, self.rows.row(i)))
            .collect();
        let (_, kth, _) = dists.select_nth_unstable_by(self.k - 1, |a, b| a.total_cmp(b));
        Ok(*kth)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn normalize_in_place(v: &mut [f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}
