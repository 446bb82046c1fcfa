mod common;

use nalgebra::{DMatrix, DVector};
use selgen::classifier_ood::{train_logistic_traced, LogisticConfig};
use selgen::combiner::LinearCombiner;
use selgen::evaluation::kendall_test;
use selgen::gaussian_ood::{CovarianceMode, GaussianModel, GaussianPair};
use selgen::linalg::{cholesky, covariance, mean, SpdMatrix};
use selgen::rng::SplitMix64;

use common::*;

#[test]
fn covariance_matches_two_pass_oracle() {
    let mut rng = SplitMix64::new(11);
    let rows = normal_matrix(&mut rng, 500, 7, 2.0);
    let mu = mean(&rows).unwrap();
    let got = covariance(&rows, &mu, 1e-6).unwrap();

    let x = to_dmatrix(&rows);
    let centered = DMatrix::from_fn(500, 7, |i, j| x[(i, j)] - x.column(j).mean());
    let mut want = centered.transpose() * &centered / 500.0;
    let bump = 1e-6 * want.trace() / 7.0;
    for i in 0..7 {
        want[(i, i)] += bump;
    }
    let diff = (to_dmatrix(got.matrix()) - want).amax();
    assert!(diff < 1e-10, "max diff {diff}");
}

#[test]
fn cholesky_reconstructs_random_spd() {
    let mut rng = SplitMix64::new(12);
    for d in [1, 2, 5, 16, 40] {
        let m = random_spd(&mut rng, d);
        let chol = cholesky(&SpdMatrix::new(from_dmatrix(&m)).unwrap()).unwrap();
        let err = (to_dmatrix(&chol.reconstruct()) - &m).norm() / m.norm();
        assert!(err < 1e-8, "d={d}: {err}");
        let log_det = m.clone().cholesky().unwrap().determinant().ln();
        assert!((chol.log_det() - log_det).abs() < 1e-9 * log_det.abs().max(1.0));
    }
}

#[test]
fn fitted_md_matches_explicit_inverse() {
    let mut rng = SplitMix64::new(13);
    let rows = normal_matrix(&mut rng, 300, 5, -1.0);
    let model = GaussianModel::fit(&rows, 1e-6).unwrap();
    let sigma = to_dmatrix(&model.chol().reconstruct());
    for _ in 0..50 {
        let x: Vec<f64> = (0..5).map(|_| 2.0 * rng.normal()).collect();
        let got = model.md_score(&x).unwrap();
        let want = md_explicit_inverse(&x, model.mean(), &sigma);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0));
    }
}

#[test]
fn pooled_logit_is_half_rmd_against_inverse() {
    let mut rng = SplitMix64::new(14);
    let fg = normal_matrix(&mut rng, 200, 4, 0.0);
    let bg = normal_matrix(&mut rng, 300, 4, 1.5);
    let pair = GaussianPair::fit(&fg, &bg, 1e-6, 1e-6, CovarianceMode::Pooled).unwrap();
    let sigma = to_dmatrix(&pair.foreground.chol().reconstruct());
    let inv = sigma.try_inverse().unwrap();
    let mf = DVector::from_column_slice(pair.foreground.mean());
    let mb = DVector::from_column_slice(pair.background.mean());
    let w = &inv * (&mb - &mf);
    let b = -0.5 * ((mb.transpose() * &inv * &mb)[(0, 0)] - (mf.transpose() * &inv * &mf)[(0, 0)]);
    let logit = pair.generative_logit().unwrap();
    for (got, want) in logit.weights.iter().zip(w.iter()) {
        assert!((got - want).abs() < 1e-9);
    }
    assert!((logit.intercept - b).abs() < 1e-9);
}

#[test]
fn ols_matches_pseudo_inverse() {
    let mut rng = SplitMix64::new(15);
    let x = normal_matrix(&mut rng, 120, 3, 0.5);
    let q: Vec<f64> = x
        .rows_iter()
        .map(|r| 0.3 - r[0] + 2.0 * r[2] + 0.1 * rng.normal())
        .collect();
    let names: Vec<String> = ["p", "r", "s"].iter().map(|s| s.to_string()).collect();
    let fit = LinearCombiner::fit(&names, &x, &q).unwrap();

    let design = DMatrix::from_fn(120, 4, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let beta = design.clone().pseudo_inverse(1e-12).unwrap() * DVector::from_column_slice(&q);
    assert!((fit.intercept - beta[0]).abs() < 1e-8);
    for (j, name) in names.iter().enumerate() {
        assert!((fit.weights[name] - beta[j + 1]).abs() < 1e-8);
    }
    let resid = &design * &beta - DVector::from_column_slice(&q);
    let rmse = (resid.norm_squared() / 120.0).sqrt();
    assert!((fit.fit_rmse - rmse).abs() < 1e-10);
}

#[test]
fn logistic_optimum_has_zero_gradient() {
    let mut rng = SplitMix64::new(16);
    let pos = normal_matrix(&mut rng, 150, 3, 0.7);
    let neg = normal_matrix(&mut rng, 150, 3, -0.2);
    let cfg = LogisticConfig {
        balance_seed: None,
        ..LogisticConfig::default()
    };
    let (clf, trace) = train_logistic_traced(&pos, &neg, &cfg).unwrap();
    assert!(clf.converged);
    for w in trace.objective.windows(2) {
        assert!(w[1] <= w[0] + 1e-15);
    }
    // Gradient of mean NLL + l2/2·|w|², intercept unpenalized.
    let n = 300.0;
    let mut grad = vec![0.0; 4];
    for (rows, y) in [(&pos, 1.0), (&neg, 0.0)] {
        for r in rows.rows_iter() {
            let z = clf.intercept + r.iter().zip(&clf.weights).map(|(a, b)| a * b).sum::<f64>();
            let e = 1.0 / (1.0 + (-z).exp()) - y;
            grad[0] += e / n;
            for j in 0..3 {
                grad[j + 1] += e * r[j] / n;
            }
        }
    }
    for j in 0..3 {
        grad[j + 1] += clf.l2 * clf.weights[j];
    }
    assert!(grad.iter().all(|g| g.abs() < 1e-6), "{grad:?}");
}

#[test]
fn kendall_p_value_matches_reference() {
    // Reference values from the asymptotic tie-corrected test.
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
    let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 10.0, 9.0];
    let r = kendall_test(&x, &y).unwrap();
    assert!((r.tau - 0.7777777777777778).abs() < 1e-12);
    assert!((r.p_value - 0.001745118699528905).abs() < 1e-12);
}
