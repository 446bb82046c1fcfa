//! Evaluation metrics: AUROC, Kendall's τ-b, quality-vs-abstention curves
//! and per-dataset survival counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Guards `floor(α·N)` against products such as `0.29 · 100 = 28.999…`.
const REMOVAL_EPS: f64 = 1e-9;

fn ensure_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

fn ensure_same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: a, right: b })
    }
}

/// Probability that a random positive outranks a random negative, ties
/// counting ½. Uses the Mann–Whitney rank sum with mid-ranks.
pub fn auroc(neg: &[f64], pos: &[f64]) -> Result<f64> {
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::EmptyInput);
    }
    ensure_finite(neg)?;
    ensure_finite(pos)?;

    let mut pooled: Vec<(f64, bool)> = neg
        .iter()
        .map(|&s| (s, false))
        .chain(pos.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Mid-ranks are half-integers, so the sum stays exact in f64.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let n_pos = pooled[i..j].iter().filter(|(_, p)| *p).count();
        pos_rank_sum += mid_rank * n_pos as f64;
        i = j;
    }
    let n_pos = pos.len() as f64;
    let u = pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * neg.len() as f64))
}

/// ROC curve points `(false positive rate, true positive rate)`, one per
/// distinct threshold, from `(0, 0)` to `(1, 1)`.
pub fn roc_points(neg: &[f64], pos: &[f64]) -> Result<Vec<(f64, f64)>> {
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::EmptyInput);
    }
    ensure_finite(neg)?;
    ensure_finite(pos)?;
    let mut pooled: Vec<(f64, bool)> = neg
        .iter()
        .map(|&s| (s, false))
        .chain(pos.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            if pooled[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / nn, tp as f64 / np));
        i = j;
    }
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KendallResult {
    pub tau: f64,
    /// Two-sided p-value from the normal approximation with tie-corrected variance.
    pub p_value: f64,
    pub n: usize,
}

/// Pair counts behind τ-b.
struct TauCounts {
    n0: u64,
    ties_x: u64,
    ties_y: u64,
    /// `C − D`.
    s: i64,
    x_groups: Vec<u64>,
    y_groups: Vec<u64>,
}

fn tie_pairs(t: u64) -> u64 {
    t * (t.saturating_sub(1)) / 2
}

/// Lengths of runs of equal values in a sorted slice.
fn runs(sorted: &[f64]) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        out.push((j - i) as u64);
        i = j;
    }
    out
}

/// Knight's O(n log n) pair counting: sort by `(x, y)`, then count
/// discordant pairs as the inversions of `y` during a merge sort.
fn tau_counts(x: &[f64], y: &[f64]) -> TauCounts {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let n0 = tie_pairs(n as u64);
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let x_groups = runs(&xs);
    let ties_x: u64 = x_groups.iter().map(|&t| tie_pairs(t)).sum();

    let mut joint = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] && y[idx[j]] == y[idx[i]] {
            j += 1;
        }
        joint += tie_pairs((j - i) as u64);
        i = j;
    }

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);
    let y_groups = runs(&ys);
    let ties_y: u64 = y_groups.iter().map(|&t| tie_pairs(t)).sum();

    let s = (n0 + joint) as i64 - ties_x as i64 - ties_y as i64 - 2 * discordant as i64;
    TauCounts {
        n0,
        ties_x,
        ties_y,
        s,
        x_groups,
        y_groups,
    }
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left_buf, right_buf) = buf.split_at_mut(mid);
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        merge_count(l, left_buf) + merge_count(r, right_buf)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// Kendall's τ-b = `(C − D) / √((C + D + T_x)(C + D + T_y))`.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    kendall_test(x, y).map(|r| r.tau)
}

/// τ-b together with its two-sided normal-approximation p-value.
pub fn kendall_test(x: &[f64], y: &[f64]) -> Result<KendallResult> {
    ensure_same_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::DegenerateInput("need at least two observations"));
    }
    ensure_finite(x)?;
    ensure_finite(y)?;
    let c = tau_counts(x, y);
    let denom_x = c.n0 - c.ties_x;
    let denom_y = c.n0 - c.ties_y;
    if denom_x == 0 || denom_y == 0 {
        return Err(Error::DegenerateInput("a sequence is constant"));
    }
    let tau = tau_b_from_counts(c.s, denom_x, denom_y);
    Ok(KendallResult {
        tau,
        p_value: tau_p_value(x.len() as u64, c.s, &c.x_groups, &c.y_groups),
        n: x.len(),
    })
}

/// Shared final step so every pair-counting route yields identical bits.
pub fn tau_b_from_counts(s: i64, pairs_untied_x: u64, pairs_untied_y: u64) -> f64 {
    s as f64 / ((pairs_untied_x as f64) * (pairs_untied_y as f64)).sqrt()
}

fn tau_p_value(n: u64, s: i64, x_groups: &[u64], y_groups: &[u64]) -> f64 {
    let n = n as f64;
    let sum_a = |groups: &[u64], f: &dyn Fn(f64) -> f64| -> f64 {
        groups.iter().map(|&t| f(t as f64)).sum()
    };
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = sum_a(x_groups, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum_a(y_groups, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let t1 = sum_a(x_groups, &|t| t * (t - 1.0));
    let u1 = sum_a(y_groups, &|t| t * (t - 1.0));
    let t2 = sum_a(x_groups, &|t| t * (t - 1.0) * (t - 2.0));
    let u2 = sum_a(y_groups, &|t| t * (t - 1.0) * (t - 2.0));
    let mut var = (v0 - vt - vu) / 18.0 + t1 * u1 / (2.0 * n * (n - 1.0));
    if n > 2.0 {
        var += t2 * u2 / (9.0 * n * (n - 1.0) * (n - 2.0));
    }
    if !(var > 0.0) {
        return 1.0;
    }
    let z = s as f64 / var.sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Number of examples removed at abstention rate `alpha`: `⌊α·N⌋`.
pub fn removal_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 + REMOVAL_EPS).floor() as usize).min(n)
}

/// `{0, 0.01, …, 0.99}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..100).map(|i| i as f64 / 100.0).collect()
}

fn validate_grid(alphas: &[f64]) -> Result<()> {
    if alphas.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("alpha grid must start at 0".into()));
    }
    for w in alphas.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(
                "alpha grid must be strictly increasing".into(),
            ));
        }
    }
    if alphas.iter().any(|a| !(*a >= 0.0 && *a < 1.0)) {
        return Err(Error::InvalidArgument("alphas must lie in [0, 1)".into()));
    }
    Ok(())
}

/// Indices in removal order: highest score first, earlier index first on ties.
pub fn abstention_order(scores: &[f64]) -> Result<Vec<usize>> {
    ensure_finite(scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaPoint {
    pub alpha: f64,
    pub mean_quality: f64,
    pub n_kept: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaCurve {
    pub points: Vec<QaPoint>,
    /// Trapezoidal area over the supplied alpha grid.
    pub area: f64,
}

/// Quality-vs-abstention curve: at each `α`, drop the `⌊α·N⌋` highest
/// abstention scores and average the quality of what remains.
pub fn qa_curve(abstain_scores: &[f64], quality: &[f64], alphas: &[f64]) -> Result<QaCurve> {
    ensure_same_len(abstain_scores.len(), quality.len())?;
    ensure_finite(quality)?;
    validate_grid(alphas)?;
    let order = abstention_order(abstain_scores)?;
    let n = order.len();
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let kept = &order[removal_count(alpha, n)..];
        if kept.is_empty() {
            return Err(Error::EmptyAfterRemoval { alpha });
        }
        let total: f64 = kept.iter().map(|&i| quality[i]).sum();
        points.push(QaPoint {
            alpha,
            mean_quality: total / kept.len() as f64,
            n_kept: kept.len(),
        });
    }
    let area = points
        .windows(2)
        .map(|w| (w[1].alpha - w[0].alpha) * (w[0].mean_quality + w[1].mean_quality) / 2.0)
        .sum();
    Ok(QaCurve { points, area })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTable {
    pub alphas: Vec<f64>,
    /// Surviving count per dataset label, aligned with `alphas`.
    pub counts: BTreeMap<String, Vec<usize>>,
}

impl SurvivalTable {
    pub fn total_kept(&self, point: usize) -> usize {
        self.counts.values().map(|c| c[point]).sum()
    }
}

/// Per-dataset counts that survive the same removal rule as [`qa_curve`].
pub fn survival_counts<S: AsRef<str>>(
    abstain_scores: &[f64],
    dataset_labels: &[S],
    alphas: &[f64],
) -> Result<SurvivalTable> {
    ensure_same_len(abstain_scores.len(), dataset_labels.len())?;
    validate_grid(alphas)?;
    let order = abstention_order(abstain_scores)?;
    let n = order.len();

    let mut current: BTreeMap<String, usize> = BTreeMap::new();
    for l in dataset_labels {
        *current.entry(l.as_ref().to_string()).or_default() += 1;
    }
    let mut counts: BTreeMap<String, Vec<usize>> = current
        .keys()
        .map(|k| (k.clone(), Vec::with_capacity(alphas.len())))
        .collect();
    let mut removed = 0;
    for &alpha in alphas {
        let target = removal_count(alpha, n);
        for &i in &order[removed..target] {
            *current
                .get_mut(dataset_labels[i].as_ref())
                .expect("label counted") -= 1;
        }
        removed = target;
        for (label, c) in &current {
            counts.get_mut(label).expect("label present").push(*c);
        }
    }
    Ok(SurvivalTable {
        alphas: alphas.to_vec(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[5.0, 5.0], &[5.0, 5.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(auroc(&[], &[1.0]), Err(Error::EmptyInput)));
        assert!(matches!(
            auroc(&[f64::NAN], &[1.0]),
            Err(Error::NonFiniteInput)
        ));
    }

    #[test]
    fn roc_points_endpoints() {
        let pts = roc_points(&[0.0, 1.0], &[2.0, 3.0]).unwrap();
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        assert!(pts.contains(&(0.0, 1.0)));
    }

    #[test]
    fn kendall_cases() {
        assert_eq!(
            kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            1.0
        );
        assert_eq!(
            kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        );
        let t = kendall_tau_b(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            kendall_tau_b(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            kendall_tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn kendall_with_ties_matches_hand_count() {
        // Pairs: (12): x tie, y +  → Tx. (13): C. (14): C. (23): C. (24): C. (34): y tie → Ty.
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 3.0];
        let t = kendall_tau_b(&x, &y).unwrap();
        let want = 4.0 / ((5.0f64) * 5.0).sqrt();
        assert_eq!(t, want);
    }

    #[test]
    fn kendall_p_value_matches_reference() {
        // Reference from scipy.stats.kendalltau(method="asymptotic").
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 10.0, 9.0];
        let r = kendall_test(&x, &y).unwrap();
        assert!((r.tau - 0.777_777_777_777_777_8).abs() < 1e-12);
        assert!(
            (r.p_value - 0.001_745_118_699_528_905).abs() < 1e-12,
            "{}",
            r.p_value
        );

        let x = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 5.0];
        let y = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 5.0, 4.0];
        let r = kendall_test(&x, &y).unwrap();
        assert!((r.tau - 0.816_496_580_927_726_1).abs() < 1e-12);
        assert!(
            (r.p_value - 0.008_691_011_063_697_428).abs() < 1e-12,
            "{}",
            r.p_value
        );
    }

    #[test]
    fn merge_count_counts_strict_inversions() {
        let mut v = [3.0, 1.0, 2.0, 2.0, 0.0];
        let mut buf = [0.0; 5];
        // (3,1) (3,2) (3,2) (3,0) (1,0) (2,0) (2,0)
        assert_eq!(merge_count(&mut v, &mut buf), 7);
        assert_eq!(v, [0.0, 1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn qa_curve_cases() {
        let q = [1.0, 2.0, 3.0, 4.0];
        let s: Vec<f64> = q.iter().map(|v| -v).collect();
        let c = qa_curve(&s, &q, &[0.0, 0.5]).unwrap();
        assert_eq!(c.points[0].mean_quality, 2.5);
        assert_eq!(c.points[0].n_kept, 4);
        assert_eq!(c.points[1].mean_quality, 3.5);
        assert_eq!(c.points[1].n_kept, 2);
        assert!((c.area - 0.5 * (2.5 + 3.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn qa_curve_ties_follow_input_order() {
        // All tied: the first ⌊αN⌋ rows by index are removed.
        let c = qa_curve(&[0.0; 4], &[10.0, 20.0, 30.0, 40.0], &[0.0, 0.25, 0.5]).unwrap();
        let means: Vec<f64> = c.points.iter().map(|p| p.mean_quality).collect();
        assert_eq!(means, vec![25.0, 30.0, 35.0]);
    }

    #[test]
    fn qa_curve_errors() {
        assert!(matches!(
            qa_curve(&[1.0], &[1.0, 2.0], &[0.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            qa_curve(&[], &[], &[0.0]),
            Err(Error::EmptyAfterRemoval { .. })
        ));
        assert!(qa_curve(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(qa_curve(&[1.0, 2.0], &[1.0, 2.0], &[0.1, 0.2]).is_err());
        assert!(qa_curve(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn removal_count_is_robust_to_float_products() {
        assert_eq!(removal_count(0.29, 100), 29);
        assert_eq!(removal_count(0.57, 100), 57);
        assert_eq!(removal_count(0.5, 3), 1);
        assert_eq!(removal_count(0.0, 10), 0);
    }

    #[test]
    fn survival_cases() {
        let scores = [10.0, 11.0, 12.0, 1.0, 2.0, 3.0, 4.0];
        let labels = ["a", "a", "a", "b", "b", "b", "b"];
        let alphas = [0.0, 3.0 / 7.0, 0.5];
        let t = survival_counts(&scores, &labels, &alphas).unwrap();
        assert_eq!(t.counts["a"], vec![3, 0, 0]);
        assert_eq!(t.counts["b"], vec![4, 4, 4]);
        assert_eq!(t.total_kept(2), 7 - removal_count(0.5, 7));
    }
}
