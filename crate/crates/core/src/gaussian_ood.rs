//! Gaussian OOD scores: Mahalanobis distance (MD) to a fitted in-domain
//! Gaussian and the relative score (RMD) that subtracts the MD to a
//! background Gaussian fit on a broad corpus.
//!
//! Four Gaussians are involved in a full setup: foreground and background
//! for input embeddings, and the same pair for output embeddings. Each side
//! is a [`GaussianPair`]; [`RmdScorer`] holds whichever sides are configured.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, CholeskyFactor, EmbeddingMatrix, Matrix};
use crate::OodScorer;

/// Default relative ridge: `1e-6 · trace(Σ)/d` is added to the diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Input,
    Output,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Input => "input",
            Side::Output => "output",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(Side::Input),
            "output" => Ok(Side::Output),
            other => Err(Error::InvalidArgument(format!(
                "side must be `input` or `output`, got `{other}`"
            ))),
        }
    }
}

/// A fitted Gaussian `N(μ, Σ)`, stored as `μ` and the Cholesky factor of the
/// ridged covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    mean: Vec<f64>,
    chol: CholeskyFactor,
    n_fit: usize,
    ridge: f64,
}

impl GaussianModel {
    /// Fits mean and ridged MLE covariance to `rows`. Needs at least two rows.
    pub fn fit(rows: &EmbeddingMatrix, ridge: f64) -> Result<Self> {
        check_fit_rows(rows)?;
        let mean = linalg::mean(rows)?;
        let cov = linalg::covariance(rows, &mean, ridge)?;
        let chol = linalg::cholesky(&cov).map_err(|_| Error::SingularCovariance)?;
        Ok(GaussianModel {
            mean,
            chol,
            n_fit: rows.nrows(),
            ridge,
        })
    }

    /// Reassembles a model from stored parts.
    pub fn from_parts(
        mean: Vec<f64>,
        chol: CholeskyFactor,
        n_fit: usize,
        ridge: f64,
    ) -> Result<Self> {
        check_dim(chol.dim(), mean.len())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if n_fit < 2 {
            return Err(Error::TooFewRows {
                need: 2,
                got: n_fit,
            });
        }
        Ok(GaussianModel {
            mean,
            chol,
            n_fit,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn chol(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Squared Mahalanobis distance to this Gaussian. Higher means further
    /// from the fitted population.
    pub fn md_score(&self, x: &[f64]) -> Result<f64> {
        linalg::mahalanobis_sq(x, &self.mean, &self.chol)
    }
}

impl OodScorer for GaussianModel {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        self.md_score(x)
    }
}

fn check_fit_rows(rows: &EmbeddingMatrix) -> Result<()> {
    match rows.nrows() {
        0 => Err(Error::EmptyInput),
        1 => Err(Error::TooFewRows { need: 2, got: 1 }),
        _ => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// Separate covariance for foreground and background.
    #[default]
    PerClass,
    /// One within-class covariance shared by both Gaussians. Under this mode
    /// RMD is an affine function of the embedding.
    Pooled,
}

/// Foreground (in-domain) and background Gaussians for one side.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPair {
    pub foreground: GaussianModel,
    pub background: GaussianModel,
}

/// The affine score `w·x + b` that the generative model reduces to when the
/// two covariances are identical. Equals `RMD(x) / 2` and is the log-odds of
/// "background" versus "in-domain" under equal priors.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeLogit {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl GenerativeLogit {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(self.intercept + dot(&self.weights, x))
    }
}

impl GaussianPair {
    pub fn new(foreground: GaussianModel, background: GaussianModel) -> Result<Self> {
        check_dim(foreground.dim(), background.dim())?;
        Ok(GaussianPair {
            foreground,
            background,
        })
    }

    /// Fits both Gaussians. `fg_ridge` and `bg_ridge` are applied
    /// independently in per-class mode; pooled mode uses `fg_ridge` for the
    /// shared covariance.
    pub fn fit(
        fg_rows: &EmbeddingMatrix,
        bg_rows: &EmbeddingMatrix,
        fg_ridge: f64,
        bg_ridge: f64,
        mode: CovarianceMode,
    ) -> Result<Self> {
        match mode {
            CovarianceMode::PerClass => GaussianPair::new(
                GaussianModel::fit(fg_rows, fg_ridge)?,
                GaussianModel::fit(bg_rows, bg_ridge)?,
            ),
            CovarianceMode::Pooled => GaussianPair::fit_pooled(fg_rows, bg_rows, fg_ridge),
        }
    }

    fn fit_pooled(
        fg_rows: &EmbeddingMatrix,
        bg_rows: &EmbeddingMatrix,
        ridge: f64,
    ) -> Result<Self> {
        check_fit_rows(fg_rows)?;
        check_fit_rows(bg_rows)?;
        check_dim(fg_rows.ncols(), bg_rows.ncols())?;
        let fg_mean = linalg::mean(fg_rows)?;
        let bg_mean = linalg::mean(bg_rows)?;
        let d = fg_rows.ncols();

        let mut centered = Matrix::zeros(fg_rows.nrows() + bg_rows.nrows(), d);
        for (i, row) in fg_rows.rows_iter().enumerate() {
            for ((c, x), m) in centered.row_mut(i).iter_mut().zip(row).zip(&fg_mean) {
                *c = x - m;
            }
        }
        let offset = fg_rows.nrows();
        for (i, row) in bg_rows.rows_iter().enumerate() {
            for ((c, x), m) in centered
                .row_mut(offset + i)
                .iter_mut()
                .zip(row)
                .zip(&bg_mean)
            {
                *c = x - m;
            }
        }
        let cov = linalg::covariance(&centered, &vec![0.0; d], ridge)?;
        let chol = linalg::cholesky(&cov).map_err(|_| Error::SingularCovariance)?;
        Ok(GaussianPair {
            foreground: GaussianModel {
                mean: fg_mean,
                chol: chol.clone(),
                n_fit: fg_rows.nrows(),
                ridge,
            },
            background: GaussianModel {
                mean: bg_mean,
                chol,
                n_fit: bg_rows.nrows(),
                ridge,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.foreground.dim()
    }

    /// `MD_fg(x) − MD_bg(x)`. Positive leans OOD, negative leans in-domain.
    pub fn rmd_score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.foreground.md_score(x)? - self.background.md_score(x)?)
    }

    /// True when both Gaussians carry the same covariance factor.
    pub fn shares_covariance(&self) -> bool {
        self.foreground.chol == self.background.chol
    }

    /// Closed-form linear logit for a shared-covariance pair:
    /// `w = Σ⁻¹(μ_bg − μ_fg)`, `b = −½(μ_bgᵀΣ⁻¹μ_bg − μ_fgᵀΣ⁻¹μ_fg)`.
    pub fn generative_logit(&self) -> Result<GenerativeLogit> {
        if !self.shares_covariance() {
            return Err(Error::InvalidArgument(
                "generative logit requires a shared covariance (fit in pooled mode)".into(),
            ));
        }
        let chol = &self.foreground.chol;
        let mu_f = &self.foreground.mean;
        let mu_b = &self.background.mean;
        let p_mu_f = chol.solve(mu_f)?;
        let p_mu_b = chol.solve(mu_b)?;
        let weights: Vec<f64> = p_mu_b.iter().zip(&p_mu_f).map(|(b, f)| b - f).collect();
        let intercept = -0.5 * (dot(mu_b, &p_mu_b) - dot(mu_f, &p_mu_f));
        Ok(GenerativeLogit { intercept, weights })
    }
}

impl OodScorer for GaussianPair {
    fn dim(&self) -> usize {
        self.foreground.dim()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        self.rmd_score(x)
    }
}

/// Foreground/background Gaussians for the input side, the output side, or both.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RmdScorer {
    pub input: Option<GaussianPair>,
    pub output: Option<GaussianPair>,
}

impl RmdScorer {
    pub fn with_side(mut self, side: Side, pair: GaussianPair) -> Self {
        match side {
            Side::Input => self.input = Some(pair),
            Side::Output => self.output = Some(pair),
        }
        self
    }

    pub fn pair(&self, side: Side) -> Result<&GaussianPair> {
        match side {
            Side::Input => self.input.as_ref(),
            Side::Output => self.output.as_ref(),
        }
        .ok_or(Error::SideNotConfigured(side))
    }

    pub fn md_score(&self, side: Side, x: &[f64]) -> Result<f64> {
        self.pair(side)?.foreground.md_score(x)
    }

    pub fn rmd_score(&self, side: Side, x: &[f64]) -> Result<f64> {
        self.pair(side)?.rmd_score(x)
    }

    /// RMD for every row, in row order. Runs on the current rayon pool.
    pub fn batch_score(&self, rows: &EmbeddingMatrix, side: Side) -> Result<Vec<f64>> {
        batch_score(self.pair(side)?, rows)
    }
}

/// Scores every row with `scorer`, preserving row order. Each row is scored
/// independently, so the output is identical for any thread count.
pub fn batch_score<S: OodScorer + ?Sized>(scorer: &S, rows: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    check_dim(scorer.dim(), rows.ncols())?;
    (0..rows.nrows())
        .into_par_iter()
        .map(|i| scorer.score(rows.row(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn gaussian_rows(rng: &mut SplitMix64, n: usize, d: usize, shift: f64) -> Matrix {
        let mut m = Matrix::zeros(n, d);
        for i in 0..n {
            for v in m.row_mut(i) {
                *v = rng.normal() + shift;
            }
        }
        m
    }

    #[test]
    fn ridge_example_builds_and_centers() {
        let rows = Matrix::from_rows(&[[0.0, 0.0], [0.0, 2.0]]).unwrap();
        let g = GaussianModel::fit(&rows, 0.5).unwrap();
        assert_eq!(g.mean(), &[0.0, 1.0]);
        assert_eq!(g.md_score(&[0.0, 1.0]).unwrap(), 0.0);
        // Σ = diag(0.25, 1.25)
        let md = g.md_score(&[1.0, 1.0]).unwrap();
        assert!((md - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_are_singular() {
        let rows = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(
            GaussianModel::fit(&rows, 0.0),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn too_few_rows() {
        let rows = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            GaussianModel::fit(&rows, 0.1),
            Err(Error::TooFewRows { .. })
        ));
        assert!(matches!(
            GaussianModel::fit(&Matrix::empty(2), 0.1),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn large_sample_recovers_standard_normal() {
        let mut rng = SplitMix64::new(11);
        let rows = gaussian_rows(&mut rng, 10_000, 4, 0.0);
        let g = GaussianModel::fit(&rows, DEFAULT_RIDGE).unwrap();
        for m in g.mean() {
            assert!(m.abs() < 0.05);
        }
        let cov = g.chol().reconstruct();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - want).abs() < 0.05);
            }
        }
        // Near-identity covariance: MD of (3,4,0,0) is close to 25.
        let md = g.md_score(&[3.0, 4.0, 0.0, 0.0]).unwrap();
        assert!((md - 25.0).abs() < 2.0, "md {md}");
    }

    #[test]
    fn md_delegates_to_linalg() {
        let mut rng = SplitMix64::new(5);
        let rows = gaussian_rows(&mut rng, 50, 3, 1.0);
        let g = GaussianModel::fit(&rows, DEFAULT_RIDGE).unwrap();
        let x = [0.3, -1.2, 2.0];
        assert_eq!(
            g.md_score(&x).unwrap(),
            linalg::mahalanobis_sq(&x, g.mean(), g.chol()).unwrap()
        );
    }

    #[test]
    fn rmd_self_pair_is_zero_and_antisymmetric() {
        let mut rng = SplitMix64::new(9);
        let a = GaussianModel::fit(&gaussian_rows(&mut rng, 40, 3, 0.0), 1e-3).unwrap();
        let b = GaussianModel::fit(&gaussian_rows(&mut rng, 40, 3, 2.0), 1e-3).unwrap();
        let same = GaussianPair::new(a.clone(), a.clone()).unwrap();
        let ab = GaussianPair::new(a.clone(), b.clone()).unwrap();
        let ba = GaussianPair::new(b, a).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.normal() * 3.0).collect();
            assert_eq!(same.rmd_score(&x).unwrap(), 0.0);
            assert_eq!(ab.rmd_score(&x).unwrap(), -ba.rmd_score(&x).unwrap());
        }
    }

    #[test]
    fn rmd_separates_two_domains() {
        let mut rng = SplitMix64::new(21);
        let d = 4;
        let pair = GaussianPair::fit(
            &gaussian_rows(&mut rng, 2000, d, 0.0),
            &gaussian_rows(&mut rng, 2000, d, 10.0),
            DEFAULT_RIDGE,
            DEFAULT_RIDGE,
            CovarianceMode::PerClass,
        )
        .unwrap();
        let fg_test = gaussian_rows(&mut rng, 1000, d, 0.0);
        let bg_test = gaussian_rows(&mut rng, 1000, d, 10.0);
        let neg = batch_score(&pair, &fg_test)
            .unwrap()
            .iter()
            .filter(|s| **s < 0.0)
            .count();
        let pos = batch_score(&pair, &bg_test)
            .unwrap()
            .iter()
            .filter(|s| **s > 0.0)
            .count();
        assert!(neg >= 990 && pos >= 990, "{neg} {pos}");
    }

    #[test]
    fn missing_side_is_reported() {
        let scorer = RmdScorer::default();
        assert!(matches!(
            scorer.rmd_score(Side::Output, &[0.0]),
            Err(Error::SideNotConfigured(Side::Output))
        ));
    }

    #[test]
    fn batch_score_edges_and_thread_determinism() {
        let mut rng = SplitMix64::new(2);
        let pair = GaussianPair::fit(
            &gaussian_rows(&mut rng, 300, 5, 0.0),
            &gaussian_rows(&mut rng, 300, 5, 1.0),
            DEFAULT_RIDGE,
            DEFAULT_RIDGE,
            CovarianceMode::PerClass,
        )
        .unwrap();
        let scorer = RmdScorer::default().with_side(Side::Input, pair.clone());
        assert!(scorer
            .batch_score(&Matrix::empty(5), Side::Input)
            .unwrap()
            .is_empty());

        let one = gaussian_rows(&mut rng, 1, 5, 0.0);
        assert_eq!(
            scorer.batch_score(&one, Side::Input).unwrap(),
            vec![pair.rmd_score(one.row(0)).unwrap()]
        );

        let rows = gaussian_rows(&mut rng, 1000, 5, 0.5);
        let sequential: Vec<f64> = rows
            .rows_iter()
            .map(|r| pair.rmd_score(r).unwrap())
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let parallel = pool.install(|| scorer.batch_score(&rows, Side::Input).unwrap());
        assert_eq!(
            sequential.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            parallel.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pooled_pair_matches_generative_logit() {
        let mut rng = SplitMix64::new(17);
        let pair = GaussianPair::fit(
            &gaussian_rows(&mut rng, 200, 3, 0.0),
            &gaussian_rows(&mut rng, 300, 3, 1.5),
            DEFAULT_RIDGE,
            DEFAULT_RIDGE,
            CovarianceMode::Pooled,
        )
        .unwrap();
        assert!(pair.shares_covariance());
        let logit = pair.generative_logit().unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.normal() * 2.0).collect();
            let rmd = pair.rmd_score(&x).unwrap();
            assert!((rmd - 2.0 * logit.score(&x).unwrap()).abs() < 1e-9 * (1.0 + rmd.abs()));
        }
    }

    #[test]
    fn generative_logit_needs_shared_covariance() {
        let mut rng = SplitMix64::new(1);
        let pair = GaussianPair::fit(
            &gaussian_rows(&mut rng, 50, 2, 0.0),
            &gaussian_rows(&mut rng, 50, 2, 1.0),
            DEFAULT_RIDGE,
            DEFAULT_RIDGE,
            CovarianceMode::PerClass,
        )
        .unwrap();
        assert!(pair.generative_logit().is_err());
    }
}
