//! Soft dynamic time warping.
//!
//! For a cost matrix `D` (`n × m`) the soft-DTW value is the γ-smoothed
//! minimum over all monotone alignment paths from `(0, 0)` to
//! `(n - 1, m - 1)`:
//!
//! ```text
//! R[0,0] = 0,  R[i,0] = R[0,j] = +inf
//! R[i,j] = D[i-1,j-1] + softmin_γ(R[i-1,j-1], R[i-1,j], R[i,j-1])
//! ```
//!
//! Its gradient with respect to `D` is the soft alignment matrix `E`, the
//! expected occupancy of every cell under the Gibbs distribution over paths.
//! `E` is computed by a reverse sweep over the same table.
//!
//! The boundary `+inf` is stored as [`INF_SENTINEL`] so that tables stay
//! finite and comparable across implementations.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{l2_normalize_rows, l2_normalize_rows_backward};

/// Stand-in for `+inf` on the table boundary.
pub const INF_SENTINEL: f64 = 1e30;

/// Pairwise costs between the timesteps of two sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix(pub Array2<f64>);

/// Accumulated soft costs, `(n + 1) × (m + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DpTable {
    pub values: Array2<f64>,
    pub gamma: f64,
}

/// `∂ softdtw / ∂ D`, entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAlignmentMatrix(pub Array2<f64>);

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.t().to_owned())
    }
}

/// Squared Euclidean distance between every row of `a` and every row of `b`.
pub fn pairwise_sq_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<CostMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "feature widths differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let d = Array2::from_shape_fn((a.nrows(), b.nrows()), |(t, u)| {
        a.row(t)
            .iter()
            .zip(b.row(u).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    });
    Ok(CostMatrix(d))
}

/// `-γ log(e^{-x/γ} + e^{-y/γ} + e^{-z/γ})`, evaluated with a min-shift.
/// Infinite arguments (or the sentinel) drop out; if all three are infinite
/// the result is `+inf`.
pub fn soft_min3(x: f64, y: f64, z: f64, gamma: f64) -> f64 {
    let m = x.min(y).min(z);
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum = [x, y, z]
        .iter()
        .map(|&v| {
            if v == f64::INFINITY {
                0.0
            } else {
                (-(v - m) / gamma).exp()
            }
        })
        .sum::<f64>();
    m - gamma * sum.ln()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")))
    }
}

fn check_cost(d: &CostMatrix) -> Result<()> {
    if d.0.is_empty() {
        return Err(Error::InvalidArgument("empty cost matrix".into()));
    }
    if d.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }
    Ok(())
}

/// `a + b` as an unevaluated sum `(s, err)` with `s = fl(a + b)` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Soft-DTW value and the forward table for [`softdtw_grad`].
///
/// Each cell is carried as a compensated pair (value plus rounding
/// residual), so the result is close to correctly rounded however long the
/// path. Finite differences of the value then resolve alignment weights
/// down to about 1e-9.
pub fn softdtw_value(d: &CostMatrix, gamma: f64) -> Result<(f64, DpTable)> {
    check_gamma(gamma)?;
    check_cost(d)?;
    let (n, m) = d.dim();
    let mut hi = Array2::from_elem((n + 1, m + 1), INF_SENTINEL);
    let mut lo = Array2::<f64>::zeros((n + 1, m + 1));
    hi[[0, 0]] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let cells = [(i - 1, j - 1), (i - 1, j), (i, j - 1)];
            let best = cells
                .iter()
                .copied()
                .min_by(|&a, &b| hi[a].total_cmp(&hi[b]))
                .expect("three neighbours");
            let (m_hi, m_lo) = (hi[best], lo[best]);
            let sum: f64 = cells
                .iter()
                .map(|&c| (-((hi[c] - m_hi) + (lo[c] - m_lo)) / gamma).exp())
                .sum();
            let (s1, e1) = two_sum(m_hi, d.0[[i - 1, j - 1]]);
            let (s2, e2) = two_sum(s1, -gamma * sum.ln());
            let (h, l) = two_sum(s2, m_lo + e1 + e2);
            if h >= INF_SENTINEL {
                hi[[i, j]] = INF_SENTINEL;
            } else {
                hi[[i, j]] = h;
                lo[[i, j]] = l;
            }
        }
    }
    let value = hi[[n, m]] + lo[[n, m]];
    let values = hi + &lo;
    Ok((value, DpTable { values, gamma }))
}

/// Reverse sweep: `E[p] = Σ_s E[s] · exp((R[s] - D[s] - R[p]) / γ)` over the
/// successors `s ∈ {(i+1,j), (i,j+1), (i+1,j+1)}` of `p = (i,j)`, seeded with
/// `E[n-1,m-1] = 1`.
pub fn softdtw_grad(d: &CostMatrix, table: &DpTable, gamma: f64) -> Result<SoftAlignmentMatrix> {
    check_gamma(gamma)?;
    let (n, m) = d.dim();
    if table.values.dim() != (n + 1, m + 1) {
        return Err(Error::Shape(format!(
            "table {:?} does not match cost matrix {:?}",
            table.values.dim(),
            (n, m)
        )));
    }
    if table.gamma != gamma {
        return Err(Error::InvalidArgument(format!(
            "table built with gamma {} but gradient requested with {gamma}",
            table.gamma
        )));
    }
    let r = &table.values;
    // Work in 1-based table coordinates; e[i][j] pairs with D[i-1][j-1].
    let mut e = Array2::<f64>::zeros((n + 2, m + 2));
    e[[n, m]] = 1.0;
    let weight = |si: usize, sj: usize, pi: usize, pj: usize| -> f64 {
        ((r[[si, sj]] - d.0[[si - 1, sj - 1]] - r[[pi, pj]]) / gamma).exp()
    };
    for i in (1..=n).rev() {
        for j in (1..=m).rev() {
            if i == n && j == m {
                continue;
            }
            let mut acc = 0.0;
            if i < n {
                acc += e[[i + 1, j]] * weight(i + 1, j, i, j);
            }
            if j < m {
                acc += e[[i, j + 1]] * weight(i, j + 1, i, j);
            }
            if i < n && j < m {
                acc += e[[i + 1, j + 1]] * weight(i + 1, j + 1, i, j);
            }
            e[[i, j]] = acc;
        }
    }
    Ok(SoftAlignmentMatrix(e.slice(ndarray::s![1..=n, 1..=m]).to_owned()))
}

/// Classic DTW: minimum path cost and the backtraced path (ties prefer the
/// diagonal, then the vertical step).
pub fn hard_dtw(d: &CostMatrix) -> Result<(f64, Vec<(usize, usize)>)> {
    check_cost(d)?;
    let (n, m) = d.dim();
    let mut r = Array2::from_elem((n + 1, m + 1), f64::INFINITY);
    r[[0, 0]] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = r[[i - 1, j - 1]].min(r[[i - 1, j]]).min(r[[i, j - 1]]);
            r[[i, j]] = d.0[[i - 1, j - 1]] + best;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n, m);
    while (i, j) != (1, 1) {
        let diag = r[[i - 1, j - 1]];
        let up = r[[i - 1, j]];
        let left = r[[i, j - 1]];
        (i, j) = if diag <= up && diag <= left {
            (i - 1, j - 1)
        } else if up <= left {
            (i - 1, j)
        } else {
            (i, j - 1)
        };
        path.push((i - 1, j - 1));
    }
    path.reverse();
    Ok((r[[n, m]], path))
}

/// Result of [`tfa_batch_loss`].
#[derive(Clone, Debug)]
pub struct TfaLoss {
    /// Mean soft-DTW cost over the batch.
    pub value: f64,
    /// Per-pair soft alignment matrices (unscaled).
    pub alignments: Vec<SoftAlignmentMatrix>,
    /// Per-pair gradients of `value` with respect to the raw
    /// (pre-normalisation) feature sequences.
    pub feature_grads: Vec<(Array2<f64>, Array2<f64>)>,
}

/// Soft-DTW cost of one pair of raw feature sequences after row-wise l2
/// normalisation, with gradients with respect to both raw sequences.
pub fn tfa_pair(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    gamma: f64,
) -> Result<(f64, SoftAlignmentMatrix, Array2<f64>, Array2<f64>)> {
    let (an, a_norms) = l2_normalize_rows(a);
    let (bn, b_norms) = l2_normalize_rows(b);
    let d = pairwise_sq_distances(an.view(), bn.view())?;
    let (value, table) = softdtw_value(&d, gamma)?;
    let e = softdtw_grad(&d, &table, gamma)?;
    // D[t,u] = |a_t - b_u|^2 → dD/da_t = 2 (a_t - b_u), dD/db_u = 2 (b_u - a_t).
    let (ta, h) = an.dim();
    let tb = bn.nrows();
    let mut ga = Array2::<f64>::zeros((ta, h));
    let mut gb = Array2::<f64>::zeros((tb, h));
    for t in 0..ta {
        for u in 0..tb {
            let w = 2.0 * e.0[[t, u]];
            if w == 0.0 {
                continue;
            }
            for k in 0..h {
                let diff = w * (an[[t, k]] - bn[[u, k]]);
                ga[[t, k]] += diff;
                gb[[u, k]] -= diff;
            }
        }
    }
    let ga = l2_normalize_rows_backward(an.view(), &a_norms, ga.view());
    let gb = l2_normalize_rows_backward(bn.view(), &b_norms, gb.view());
    Ok((value, e, ga, gb))
}

/// Batch-averaged soft-DTW cost between paired feature sequences, each row
/// l2-normalised first. Sequences in a pair may differ in length.
pub fn tfa_batch_loss(pairs: &[(ArrayView2<'_, f64>, ArrayView2<'_, f64>)], gamma: f64) -> Result<TfaLoss> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("TFA loss needs at least one pair".into()));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    let mut alignments = Vec::with_capacity(pairs.len());
    let mut feature_grads = Vec::with_capacity(pairs.len());
    // Fixed left-to-right reduction order.
    for (a, b) in pairs {
        let (v, e, ga, gb) = tfa_pair(*a, *b, gamma)?;
        value += v;
        alignments.push(e);
        feature_grads.push((ga * scale, gb * scale));
    }
    Ok(TfaLoss {
        value: value * scale,
        alignments,
        feature_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use ndarray::array;
    use proptest::prelude::*;

    /// Costs of every monotone path from (0,0) to (n-1,m-1).
    fn all_path_costs(d: &Array2<f64>) -> Vec<f64> {
        fn walk(d: &Array2<f64>, i: usize, j: usize, acc: f64, out: &mut Vec<f64>) {
            let (n, m) = d.dim();
            let acc = acc + d[[i, j]];
            if i == n - 1 && j == m - 1 {
                out.push(acc);
                return;
            }
            if i + 1 < n {
                walk(d, i + 1, j, acc, out);
            }
            if j + 1 < m {
                walk(d, i, j + 1, acc, out);
            }
            if i + 1 < n && j + 1 < m {
                walk(d, i + 1, j + 1, acc, out);
            }
        }
        let mut out = Vec::new();
        walk(d, 0, 0, 0.0, &mut out);
        out
    }

    /// Soft-min over the explicit path set, the definition soft-DTW smooths.
    fn brute_soft(d: &Array2<f64>, gamma: f64) -> f64 {
        let costs = all_path_costs(d);
        let m = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        m - gamma * costs.iter().map(|c| (-(c - m) / gamma).exp()).sum::<f64>().ln()
    }

    fn random_cost(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = RngState::new(seed);
        Array2::from_shape_fn((n, m), |_| rng.uniform_range(0.0, 2.0))
    }

    #[test]
    fn soft_min3_examples() {
        assert!((soft_min3(1.0, 1.0, 1.0, 1.0) - (1.0 - 3f64.ln())).abs() < 1e-12);
        let want = -0.1 * (1.0 + (-5f64).exp() + (-10f64).exp()).ln();
        assert!((soft_min3(0.0, 0.5, 1.0, 0.1) - want).abs() < 1e-15);
        assert!((soft_min3(0.0, 0.5, 1.0, 0.1) - -0.000676).abs() < 1e-6);
        assert!((soft_min3(2.0, 5.0, 9.0, 1e-6) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn soft_min3_handles_infinities() {
        assert_eq!(
            soft_min3(f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.1),
            f64::INFINITY
        );
        assert_eq!(soft_min3(f64::INFINITY, 3.0, f64::INFINITY, 0.1), 3.0);
        assert_eq!(soft_min3(INF_SENTINEL, 0.0, INF_SENTINEL, 0.1), 0.0);
    }

    #[test]
    fn pairwise_distance_examples() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        let d = pairwise_sq_distances(e.view(), e.view()).unwrap();
        assert_eq!(d.0, array![[0.0, 2.0], [2.0, 0.0]]);
        let a = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let b = array![[0.0, 1.0], [2.0, 2.0]];
        let ab = pairwise_sq_distances(a.view(), b.view()).unwrap();
        let ba = pairwise_sq_distances(b.view(), a.view()).unwrap();
        assert_eq!(ab.0, ba.0.t());
        assert!(pairwise_sq_distances(a.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn single_cell_value() {
        let (v, _) = softdtw_value(&CostMatrix(array![[0.7]]), 0.1).unwrap();
        assert_eq!(v, 0.7);
    }

    #[test]
    fn two_by_two_value() {
        let (v, _) = softdtw_value(&CostMatrix(array![[0.0, 1.0], [1.0, 0.0]]), 0.1).unwrap();
        let want = -0.1 * (1.0 + 2.0 * (-10f64).exp()).ln();
        assert!((v - want).abs() < 1e-15);
        assert!((v - -9.08e-6).abs() < 1e-8);
    }

    #[test]
    fn empty_cost_is_error() {
        assert!(softdtw_value(&CostMatrix(Array2::zeros((0, 3))), 0.1).is_err());
        assert!(hard_dtw(&CostMatrix(Array2::zeros((2, 0)))).is_err());
        assert!(softdtw_value(&CostMatrix(array![[1.0]]), 0.0).is_err());
    }

    #[test]
    fn matches_path_enumeration() {
        for seed in 0..20 {
            let d = random_cost(4, 5, seed);
            let (v, _) = softdtw_value(&CostMatrix(d.clone()), 0.01).unwrap();
            let hard = all_path_costs(&d).into_iter().fold(f64::INFINITY, f64::min);
            assert!(v <= hard);
            assert!(hard - v <= 0.05);
            assert!((v - brute_soft(&d, 0.01)).abs() < 1e-9);
            assert!((v - brute_soft(&d, 0.01)).abs() < 1e-9);
            let (v1, _) = softdtw_value(&CostMatrix(d.clone()), 1.0).unwrap();
            assert!((v1 - brute_soft(&d, 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn hard_dtw_example() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 2.0, 3.0];
        let d = Array2::from_shape_fn((3, 4), |(i, j)| (x[i] - y[j]) * (x[i] - y[j]));
        let (cost, path) = hard_dtw(&CostMatrix(d)).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path, vec![(0, 0), (1, 1), (1, 2), (2, 3)]);
        let (c, p) = hard_dtw(&CostMatrix(array![[0.25]])).unwrap();
        assert_eq!((c, p), (0.25, vec![(0, 0)]));
    }

    #[test]
    fn hard_dtw_tie_prefers_diagonal_then_vertical() {
        let (_, p) = hard_dtw(&CostMatrix(Array2::zeros((2, 2)))).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        // From (2,1): diagonal unavailable; vertical and horizontal tie.
        let (_, p) = hard_dtw(&CostMatrix(Array2::zeros((3, 2)))).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 0), (2, 1)]);
    }

    fn central_diff(d: &Array2<f64>, gamma: f64, eps: f64) -> Array2<f64> {
        Array2::from_shape_fn(d.raw_dim(), |(i, j)| {
            let mut p = d.clone();
            p[[i, j]] += eps;
            let mut q = d.clone();
            q[[i, j]] -= eps;
            let vp = softdtw_value(&CostMatrix(p), gamma).unwrap().0;
            let vq = softdtw_value(&CostMatrix(q), gamma).unwrap().0;
            (vp - vq) / (2.0 * eps)
        })
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let d = random_cost(6, 7, 100 + seed);
            let cm = CostMatrix(d.clone());
            let (_, t) = softdtw_value(&cm, 0.1).unwrap();
            let e = softdtw_grad(&cm, &t, 0.1).unwrap();
            let fd = central_diff(&d, 0.1, 1e-4);
            for (a, n) in e.0.iter().zip(fd.iter()) {
                let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
                assert!(rel <= 1e-3, "{a} vs {n}");
            }
            assert!((e.0[[0, 0]] - 1.0).abs() < 1e-9);
            assert!((e.0[[5, 6]] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn small_gamma_gradient_is_path_indicator() {
        // Cheap diagonal, expensive elsewhere: a unique optimal path.
        let mut d = Array2::from_elem((5, 5), 1.0);
        for i in 0..5 {
            d[[i, i]] = 0.0;
        }
        d[[2, 3]] = 0.3;
        let cm = CostMatrix(d);
        let (_, path) = hard_dtw(&cm).unwrap();
        let (_, t) = softdtw_value(&cm, 1e-4).unwrap();
        let e = softdtw_grad(&cm, &t, 1e-4).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if path.contains(&(i, j)) { 1.0 } else { 0.0 };
                assert!((e.0[[i, j]] - want).abs() <= 1e-6, "({i},{j}) = {}", e.0[[i, j]]);
            }
        }
    }

    #[test]
    fn grad_rejects_mismatched_table() {
        let cm = CostMatrix(random_cost(3, 4, 1));
        let (_, t) = softdtw_value(&cm, 0.1).unwrap();
        assert!(softdtw_grad(&CostMatrix(random_cost(4, 4, 1)), &t, 0.1).is_err());
        assert!(softdtw_grad(&cm, &t, 0.2).is_err());
    }

    #[test]
    fn gap_to_hard_shrinks_with_gamma() {
        let d = random_cost(6, 6, 77);
        let cm = CostMatrix(d);
        let hard = hard_dtw(&cm).unwrap().0;
        let gaps: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&g| hard - softdtw_value(&cm, g).unwrap().0)
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] >= 0.0);
    }

    #[test]
    fn constant_shift_adds_expected_path_length() {
        let d = random_cost(5, 6, 9);
        let cm = CostMatrix(d.clone());
        let (v0, t) = softdtw_value(&cm, 0.1).unwrap();
        let e = softdtw_grad(&cm, &t, 0.1).unwrap();
        let len: f64 = e.0.sum();
        let eps = 1e-5;
        let vp = softdtw_value(&CostMatrix(&d + eps), 0.1).unwrap().0;
        let vm = softdtw_value(&CostMatrix(&d - eps), 0.1).unwrap().0;
        let fd = (vp - vm) / (2.0 * eps);
        assert!((fd - len).abs() / len < 1e-6);
        assert!((6.0..=10.0).contains(&len));
        let _ = v0;
    }

    #[test]
    fn tfa_single_timestep_pair() {
        let a = array![[3.0, 4.0]];
        let b = array![[1.0, 0.0]];
        let loss = tfa_batch_loss(&[(a.view(), b.view())], 0.1).unwrap();
        let want = (0.6 - 1.0f64).powi(2) + 0.8f64.powi(2);
        assert!((loss.value - want).abs() < 1e-12);
    }

    #[test]
    fn tfa_duplicate_batch_same_mean() {
        let mut rng = RngState::new(5);
        let a = Array2::from_shape_fn((6, 4), |_| rng.normal(0.0, 1.0));
        let b = Array2::from_shape_fn((5, 4), |_| rng.normal(0.0, 1.0));
        let one = tfa_batch_loss(&[(a.view(), b.view())], 0.1).unwrap();
        let three = tfa_batch_loss(&[(a.view(), b.view()); 3], 0.1).unwrap();
        assert!((one.value - three.value).abs() < 1e-12);
    }

    #[test]
    fn tfa_identical_sequences_nonpositive() {
        let mut rng = RngState::new(6);
        let a = Array2::from_shape_fn((8, 4), |_| rng.normal(0.0, 1.0));
        let loss = tfa_batch_loss(&[(a.view(), a.view())], 0.1).unwrap();
        assert!(loss.value <= 0.0);
    }

    #[test]
    fn tfa_feature_gradient_through_normalisation() {
        let mut rng = RngState::new(12);
        let a = Array2::from_shape_fn((5, 3), |_| rng.normal(0.0, 1.0));
        let b = Array2::from_shape_fn((4, 3), |_| rng.normal(0.0, 1.0));
        let loss = tfa_batch_loss(&[(a.view(), b.view()), (b.view(), a.view())], 0.1).unwrap();
        let f = |a: &Array2<f64>, b: &Array2<f64>| {
            tfa_batch_loss(&[(a.view(), b.view()), (b.view(), a.view())], 0.1)
                .unwrap()
                .value
        };
        let eps = 1e-5;
        // Gradient w.r.t. `a` sums both pair slots.
        let ga = &loss.feature_grads[0].0 + &loss.feature_grads[1].1;
        for i in 0..5 {
            for k in 0..3 {
                let mut p = a.clone();
                p[[i, k]] += eps;
                let mut q = a.clone();
                q[[i, k]] -= eps;
                let fd = (f(&p, &b) - f(&q, &b)) / (2.0 * eps);
                let rel = (fd - ga[[i, k]]).abs() / (fd.abs() + ga[[i, k]].abs()).max(1e-8);
                assert!(rel < 1e-3, "{fd} vs {}", ga[[i, k]]);
            }
        }
    }

    proptest! {
        #[test]
        fn soft_never_exceeds_hard(seed in 0u64..10_000, n in 1usize..7, m in 1usize..7, g in 0.001f64..2.0) {
            let d = CostMatrix(random_cost(n, m, seed));
            let soft = softdtw_value(&d, g).unwrap().0;
            let hard = hard_dtw(&d).unwrap().0;
            prop_assert!(soft <= hard + 1e-12);
        }

        #[test]
        fn transpose_invariant(seed in 0u64..10_000, n in 1usize..8, m in 1usize..8) {
            let d = CostMatrix(random_cost(n, m, seed));
            let a = softdtw_value(&d, 0.1).unwrap().0;
            let b = softdtw_value(&d.transpose(), 0.1).unwrap().0;
            prop_assert!((a - b).abs() <= 1e-10);
        }

        #[test]
        fn alignment_entries_in_unit_interval(seed in 0u64..10_000, n in 1usize..8, m in 1usize..8) {
            let d = CostMatrix(random_cost(n, m, seed));
            let (_, t) = softdtw_value(&d, 0.1).unwrap();
            let e = softdtw_grad(&d, &t, 0.1).unwrap();
            prop_assert!(e.0.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
            prop_assert!((e.0[[0, 0]] - 1.0).abs() <= 1e-9);
            prop_assert_eq!(e.0[[n - 1, m - 1]], 1.0);
        }
    }
}
