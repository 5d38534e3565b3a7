//! Contrastive objectives over projection batches.
//!
//! All losses work on cosine similarities scaled by a temperature and return
//! their gradient with respect to the raw (unnormalised) projection rows
//! alongside the value. Denominators use a max-shifted log-sum-exp.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{l2_normalize_rows_backward, NORM_FLOOR};

/// How a similarity `s` is turned into the exponentiated score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DeltaForm {
    /// `exp(s / τ)`.
    #[default]
    Scaled,
    /// `exp(s) / τ`. The constant `1/τ` cancels in every ratio, so this is
    /// equivalent to `τ = 1`.
    Literal,
}

impl DeltaForm {
    /// Logit used in place of `log δ` (constant offsets cancel).
    fn logit(self, s: f64, tau: f64) -> f64 {
        match self {
            DeltaForm::Scaled => s / tau,
            DeltaForm::Literal => s,
        }
    }

    fn logit_scale(self, tau: f64) -> f64 {
        match self {
            DeltaForm::Scaled => 1.0 / tau,
            DeltaForm::Literal => 1.0,
        }
    }
}

/// Cosine similarities between rows, plus the normalised rows needed for
/// backpropagation.
#[derive(Clone, Debug)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    left: Array2<f64>,
    left_norms: Vec<f64>,
    right: Array2<f64>,
    right_norms: Vec<f64>,
}

fn normalized(x: ArrayView2<'_, f64>, which: &str) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut out = x.to_owned();
    let mut norms = Vec::with_capacity(x.nrows());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if !(n >= NORM_FLOOR) {
            return Err(Error::InvalidArgument(format!(
                "{which} row {i} has zero norm; cosine similarity undefined"
            )));
        }
        row.mapv_inplace(|v| v / n);
        norms.push(n);
    }
    Ok((out, norms))
}

pub fn cosine_similarity_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<SimilarityMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "projection widths differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (left, left_norms) = normalized(a, "left")?;
    let (right, right_norms) = normalized(b, "right")?;
    let values = left.dot(&right.t());
    Ok(SimilarityMatrix {
        values,
        left,
        left_norms,
        right,
        right_norms,
    })
}

impl SimilarityMatrix {
    /// Pulls `dL/dS` back to `(dL/dA, dL/dB)` for the raw rows.
    pub fn backward(&self, grad: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let d_left = grad.dot(&self.right);
        let d_right = grad.t().dot(&self.left);
        (
            l2_normalize_rows_backward(self.left.view(), &self.left_norms, d_left.view()),
            l2_normalize_rows_backward(self.right.view(), &self.right_norms, d_right.view()),
        )
    }
}

/// A loss value with its gradient for each input batch.
#[derive(Clone, Debug)]
pub struct LossAndGrad {
    pub value: f64,
    pub grads: Vec<Array2<f64>>,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Softmax over the entries of `logits` where `mask` is true; returns the
/// log-sum-exp and the probabilities (0 where masked out).
fn masked_softmax(logits: &[f64], mask: impl Fn(usize) -> bool) -> (f64, Vec<f64>) {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(k, _)| mask(*k))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, &v)| if mask(k) { (v - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the positive partner of row `i` in the adjacent-pair layout.
pub fn ntxent_partner(i: usize) -> usize {
    i ^ 1
}

/// NT-Xent over `2N` rows where rows `2k` and `2k+1` are positives. Every
/// directed term `l(i, j) = -log δ(i,j) / Σ_{k≠i} δ(i,k)` is averaged over
/// the `2N` anchors.
pub fn ntxent_loss(z: ArrayView2<'_, f64>, tau: f64, delta: DeltaForm) -> Result<LossAndGrad> {
    check_tau(tau)?;
    let rows = z.nrows();
    if rows < 2 || !rows.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "NT-Xent needs an even number of rows >= 2, got {rows}"
        )));
    }
    let sim = cosine_similarity_matrix(z, z)?;
    let scale = delta.logit_scale(tau);
    let inv = 1.0 / rows as f64;
    let mut value = 0.0;
    let mut g_sim = Array2::<f64>::zeros((rows, rows));
    for i in 0..rows {
        let j = ntxent_partner(i);
        let logits: Vec<f64> = sim.values.row(i).iter().map(|&s| delta.logit(s, tau)).collect();
        let (lse, p) = masked_softmax(&logits, |k| k != i);
        value += lse - logits[j];
        for k in (0..rows).filter(|&k| k != i) {
            g_sim[[i, k]] += inv * scale * p[k];
        }
        g_sim[[i, j]] -= inv * scale;
    }
    let (ga, gb) = sim.backward(g_sim.view());
    Ok(LossAndGrad {
        value: value * inv,
        grads: vec![ga + gb],
    })
}

/// Directed InfoNCE for anchor row `j`: the positive is row `j` of `other`,
/// every row of `other` is in the denominator.
pub fn infonce_directional(
    anchor: ArrayView2<'_, f64>,
    other: ArrayView2<'_, f64>,
    j: usize,
    tau: f64,
    delta: DeltaForm,
) -> Result<f64> {
    check_tau(tau)?;
    if anchor.dim() != other.dim() {
        return Err(Error::Shape(format!(
            "stream shapes differ: {:?} vs {:?}",
            anchor.dim(),
            other.dim()
        )));
    }
    if j >= anchor.nrows() {
        return Err(Error::InvalidArgument(format!(
            "index {j} out of range for {} rows",
            anchor.nrows()
        )));
    }
    let sim = cosine_similarity_matrix(anchor.slice(ndarray::s![j..j + 1, ..]), other)?;
    let logits: Vec<f64> = sim.values.row(0).iter().map(|&s| delta.logit(s, tau)).collect();
    let (lse, _) = masked_softmax(&logits, |_| true);
    Ok(lse - logits[j])
}

/// Symmetric two-stream InfoNCE: the mean over `j` of both directed losses,
/// `(1/2N) Σ_j (l_j^{a→b} + l_j^{b→a})`.
///
/// Returns gradients for stream A then stream B, and the two directed
/// means as `(a→b, b→a)`.
pub fn cmc_loss(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    tau: f64,
    delta: DeltaForm,
) -> Result<(LossAndGrad, (f64, f64))> {
    check_tau(tau)?;
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "stream shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let sim = cosine_similarity_matrix(a, b)?;
    let scale = delta.logit_scale(tau);
    let inv = 1.0 / (2 * n) as f64;
    let logits = sim.values.mapv(|s| delta.logit(s, tau));
    let mut g_sim = Array2::<f64>::zeros((n, n));
    let (mut a_to_b, mut b_to_a) = (0.0, 0.0);
    for j in 0..n {
        let row: Vec<f64> = logits.row(j).to_vec();
        let (lse, p) = masked_softmax(&row, |_| true);
        a_to_b += lse - row[j];
        for k in 0..n {
            g_sim[[j, k]] += inv * scale * p[k];
        }
        g_sim[[j, j]] -= inv * scale;

        let col: Vec<f64> = logits.column(j).to_vec();
        let (lse, p) = masked_softmax(&col, |_| true);
        b_to_a += lse - col[j];
        for k in 0..n {
            g_sim[[k, j]] += inv * scale * p[k];
        }
        g_sim[[j, j]] -= inv * scale;
    }
    let (ga, gb) = sim.backward(g_sim.view());
    Ok((
        LossAndGrad {
            value: (a_to_b + b_to_a) * inv,
            grads: vec![ga, gb],
        },
        (a_to_b / n as f64, b_to_a / n as f64),
    ))
}

/// `L = L_c + α L_TFA`.
pub fn combined_objective(contrastive: f64, tfa: f64, alpha: f64) -> f64 {
    contrastive + alpha * tfa
}
