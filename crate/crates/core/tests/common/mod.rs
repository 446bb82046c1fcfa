//! Fixture builders and independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use selgen::linalg::Matrix;
use selgen::rng::SplitMix64;

pub fn normal_matrix(rng: &mut SplitMix64, n: usize, d: usize, shift: f64) -> Matrix {
    let data = (0..n * d).map(|_| rng.normal() + shift).collect();
    Matrix::from_vec(n, d, data).unwrap()
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice())
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// `A·Aᵀ + I` for a random Gaussian `A`.
pub fn random_spd(rng: &mut SplitMix64, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.normal());
    let m = &a * a.transpose() + DMatrix::identity(d, d);
    (&m + m.transpose()) * 0.5
}

/// `(x − μ)ᵀ Σ⁻¹ (x − μ)` through an explicit inverse.
pub fn md_explicit_inverse(x: &[f64], mu: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let inv = sigma.clone().try_inverse().expect("invertible");
    let v = DVector::from_iterator(x.len(), x.iter().zip(mu).map(|(a, b)| a - b));
    (v.transpose() * inv * &v)[(0, 0)]
}

/// Mann–Whitney by counting every (negative, positive) pair, ties as ½.
pub fn auroc_pairs(neg: &[f64], pos: &[f64]) -> f64 {
    let (mut wins, mut ties) = (0u64, 0u64);
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1;
            } else if p == n {
                ties += 1;
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / (pos.len() as f64 * neg.len() as f64)
}

/// Concordant minus discordant pairs, and pairs untied in x and in y.
pub fn kendall_pairs(x: &[f64], y: &[f64]) -> (i64, u64, u64) {
    let (mut s, mut ux, mut uy) = (0i64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i].partial_cmp(&x[j]).unwrap() as i64;
            let dy = y[i].partial_cmp(&y[j]).unwrap() as i64;
            s += dx * dy;
            ux += (dx != 0) as u64;
            uy += (dy != 0) as u64;
        }
    }
    (s, ux, uy)
}

/// Indices by descending score, earlier index first among ties.
pub fn sort_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// Integer draws in `0..levels`, as floats: forces heavy ties.
pub fn tied_values(rng: &mut SplitMix64, n: usize, levels: usize) -> Vec<f64> {
    (0..n).map(|_| rng.below(levels) as f64).collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// k-th smallest distance from unit(x) to the unit-normalized rows, by full sort.
pub fn knn_full_sort(rows: &Matrix, x: &[f64], k: usize) -> f64 {
    let q = unit(x);
    let mut d: Vec<f64> = rows.rows_iter().map(|r| dist(&unit(r), &q)).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d[k - 1]
}

/// Mean quality after dropping the ⌊αN⌋ highest scores, by sort and slice.
/// `removed[p]` is the removal count for grid point `p`.
pub fn qa_sort_slice(
    scores: &[f64],
    quality: &[f64],
    alphas: &[f64],
    removed: &[usize],
) -> (Vec<f64>, f64) {
    let order = sort_desc(scores);
    let means: Vec<f64> = removed
        .iter()
        .map(|&r| {
            let kept = &order[r..];
            kept.iter().map(|&i| quality[i]).sum::<f64>() / kept.len() as f64
        })
        .collect();
    let mut area = 0.0;
    for p in 1..alphas.len() {
        area += (alphas[p] - alphas[p - 1]) * (means[p - 1] + means[p]) / 2.0;
    }
    (means, area)
}
