//! Seeded synthetic fixtures with known ground truth.
//!
//! [`gen_domain`] samples a Gaussian domain. [`gen_selective_scenario`]
//! builds a full selective-generation setup: foreground and background fit
//! sets plus an evaluation pool whose quality is planted as a linear
//! function of a hidden difficulty and the projection of the embedding on
//! the shift direction. Perplexity reflects the difficulty only for
//! in-domain rows, so neither perplexity nor an OOD score alone can rank
//! the pool well.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian_ood::Side;
use crate::linalg::{self, CholeskyFactor, Matrix, SpdMatrix};
use crate::rng::SplitMix64;
use crate::store::{EmbeddingStore, ExampleMeta};

pub const IN_DOMAIN: &str = "in_domain";
pub const SHIFTED: &str = "shifted";
pub const BACKGROUND: &str = "background";

/// Quality column written into each pool row's metadata.
pub const QUALITY_KEY: &str = "quality";
/// The difficulty term that entered the planted quality.
pub const DIFFICULTY_KEY: &str = "planted_difficulty";
/// Projection `Σx / √d` of the embedding on the shift direction.
pub const SHIFT_TERM_KEY: &str = "planted_shift";

#[derive(Clone, Debug, PartialEq)]
pub enum CovSpec {
    Identity,
    Diagonal(Vec<f64>),
    Spd(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    pub split: String,
    pub n: usize,
    pub d: usize,
    pub mean: Vec<f64>,
    pub cov: CovSpec,
    pub seed: u64,
}

impl DomainSpec {
    pub fn standard(name: &str, n: usize, d: usize, shift: f64, seed: u64) -> Self {
        DomainSpec {
            name: name.to_string(),
            split: "test".to_string(),
            n,
            d,
            mean: vec![shift; d],
            cov: CovSpec::Identity,
            seed,
        }
    }
}

/// Lower factor used to colour standard normals, or `None` for identity.
fn coloring(spec: &DomainSpec) -> Result<Option<Matrix>> {
    let d = spec.d;
    match &spec.cov {
        CovSpec::Identity => Ok(None),
        CovSpec::Diagonal(v) => {
            if v.len() != d {
                return Err(Error::BadCov(format!(
                    "{} diagonal entries for d = {d}",
                    v.len()
                )));
            }
            let mut l = Matrix::zeros(d, d);
            for (i, &s) in v.iter().enumerate() {
                if !(s >= 0.0) || !s.is_finite() {
                    return Err(Error::BadCov(format!("diagonal entry {i} is {s}")));
                }
                l[(i, i)] = s.sqrt();
            }
            Ok(Some(l))
        }
        CovSpec::Spd(m) => {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::BadCov(format!(
                    "{}x{} covariance for d = {d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let spd = SpdMatrix::new(m.clone()).map_err(|e| Error::BadCov(e.to_string()))?;
            let chol: CholeskyFactor =
                linalg::cholesky(&spd).map_err(|e| Error::BadCov(e.to_string()))?;
            Ok(Some(chol.lower().clone()))
        }
    }
}

fn sample_rows(spec: &DomainSpec, rng: &mut SplitMix64) -> Result<Matrix> {
    check_dim(spec.d, spec.mean.len())?;
    let l = coloring(spec)?;
    let mut out = Matrix::zeros(spec.n, spec.d);
    let mut z = vec![0.0; spec.d];
    for i in 0..spec.n {
        z.iter_mut().for_each(|v| *v = rng.normal());
        let row = out.row_mut(i);
        match &l {
            None => {
                for ((r, m), zi) in row.iter_mut().zip(&spec.mean).zip(&z) {
                    *r = m + zi;
                }
            }
            Some(l) => {
                for (a, r) in row.iter_mut().enumerate() {
                    let lr = l.row(a);
                    *r = spec.mean[a] + (0..=a).map(|k| lr[k] * z[k]).sum::<f64>();
                }
            }
        }
    }
    Ok(out)
}

fn plain_meta(id: String, dataset: &str, split: &str) -> ExampleMeta {
    ExampleMeta {
        id,
        dataset: dataset.to_string(),
        split: split.to_string(),
        side: Side::Input,
        perplexity: None,
        quality: BTreeMap::new(),
        n_tokens: None,
    }
}

/// Samples `spec.n` rows from `N(mean, cov)`. Deterministic per spec.
pub fn gen_domain(spec: &DomainSpec) -> Result<EmbeddingStore> {
    let mut rng = SplitMix64::new(spec.seed);
    let matrix = sample_rows(spec, &mut rng)?;
    let meta = (0..spec.n)
        .map(|i| plain_meta(format!("{}-{i}", spec.name), &spec.name, &spec.split))
        .collect();
    EmbeddingStore::new(matrix, meta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_in: usize,
    pub n_ood: usize,
    pub d: usize,
    /// Per-coordinate mean of the shifted domain.
    pub shift: f64,
    /// Standard deviation of the additive quality noise.
    pub noise: f64,
    pub n_fit_fg: usize,
    /// Background fit rows, drawn half from each domain.
    pub n_fit_bg: usize,
}

impl ScenarioConfig {
    pub fn new(seed: u64, n_in: usize, n_ood: usize, shift: f64, noise: f64) -> Self {
        ScenarioConfig {
            seed,
            n_in,
            n_ood,
            d: 8,
            shift,
            noise,
            n_fit_fg: n_in.max(2),
            n_fit_bg: (n_in + n_ood).max(2),
        }
    }
}

/// Coefficients of `quality = base − difficulty_weight·h − shift_weight·u + noise`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedCoefficients {
    pub base: f64,
    pub difficulty_weight: f64,
    pub shift_weight: f64,
    pub ppx_offset: f64,
    pub ppx_scale: f64,
}

pub const PLANTED: PlantedCoefficients = PlantedCoefficients {
    base: 1.0,
    difficulty_weight: 1.0,
    shift_weight: 0.05,
    ppx_offset: 6.0,
    ppx_scale: 4.0,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SelectiveScenario {
    pub config: ScenarioConfig,
    pub coefficients: PlantedCoefficients,
    pub fg_train: EmbeddingStore,
    pub bg_train: EmbeddingStore,
    /// In-domain rows first, then shifted rows.
    pub pool: EmbeddingStore,
}

/// Builds the planted selective-generation scenario.
///
/// In-domain rows come from `N(0, I)`, shifted rows from `N(shift·1, I)`.
/// Each pool row draws a difficulty `h ~ U(−1, 1)`; in-domain perplexity is
/// `6 + 4h`, while shifted rows report perplexity from an independent draw.
pub fn gen_selective_scenario(config: &ScenarioConfig) -> Result<SelectiveScenario> {
    if !(config.shift >= 0.0) || !(config.noise >= 0.0) {
        return Err(Error::InvalidArgument(
            "shift and noise must be >= 0".into(),
        ));
    }
    if config.d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    let c = PLANTED;
    let d = config.d;
    let domain = |name: &str, split: &str, n, shift| DomainSpec {
        name: name.to_string(),
        split: split.to_string(),
        n,
        d,
        mean: vec![shift; d],
        cov: CovSpec::Identity,
        seed: 0,
    };
    let draw = |spec: &DomainSpec, stream: u64| {
        sample_rows(spec, &mut SplitMix64::derive(config.seed, stream))
    };

    let fg = draw(&domain(IN_DOMAIN, "train", config.n_fit_fg, 0.0), 1)?;
    let fg_train = EmbeddingStore::new(
        fg,
        (0..config.n_fit_fg)
            .map(|i| plain_meta(format!("fg-{i}"), IN_DOMAIN, "train"))
            .collect(),
    )?;

    let bg_half = config.n_fit_bg / 2;
    let bg = draw(&domain(BACKGROUND, "train", bg_half, 0.0), 2)?.vstack(&draw(
        &domain(BACKGROUND, "train", config.n_fit_bg - bg_half, config.shift),
        3,
    )?)?;
    let bg_train = EmbeddingStore::new(
        bg,
        (0..config.n_fit_bg)
            .map(|i| plain_meta(format!("bg-{i}"), BACKGROUND, "train"))
            .collect(),
    )?;

    let pool_in = draw(&domain(IN_DOMAIN, "test", config.n_in, 0.0), 4)?;
    let pool_ood = draw(&domain(SHIFTED, "test", config.n_ood, config.shift), 5)?;
    let matrix = pool_in.vstack(&pool_ood)?;

    let mut latent = SplitMix64::derive(config.seed, 6);
    let sqrt_d = (d as f64).sqrt();
    let mut meta = Vec::with_capacity(config.n_in + config.n_ood);
    for (i, row) in matrix.rows_iter().enumerate() {
        let in_domain = i < config.n_in;
        let difficulty = latent.uniform(-1.0, 1.0);
        let reported = if in_domain {
            difficulty
        } else {
            latent.uniform(-1.0, 1.0)
        };
        let noise = config.noise * latent.normal();
        let shift_term = row.iter().sum::<f64>() / sqrt_d;
        let quality =
            c.base - c.difficulty_weight * difficulty - c.shift_weight * shift_term + noise;
        let (dataset, local) = if in_domain {
            (IN_DOMAIN, i)
        } else {
            (SHIFTED, i - config.n_in)
        };
        let mut m = plain_meta(format!("{dataset}-{local}"), dataset, "test");
        m.perplexity = Some(c.ppx_offset + c.ppx_scale * reported);
        m.quality = BTreeMap::from([
            (QUALITY_KEY.to_string(), quality),
            (DIFFICULTY_KEY.to_string(), difficulty),
            (SHIFT_TERM_KEY.to_string(), shift_term),
        ]);
        meta.push(m);
    }
    let pool = EmbeddingStore::new(matrix, meta)?;

    Ok(SelectiveScenario {
        config: config.clone(),
        coefficients: c,
        fg_train,
        bg_train,
        pool,
    })
}
