//! Row-wise helpers shared by the losses and the layer set.

use ndarray::{Array2, ArrayView2, Axis};

/// Norms below this are clamped when normalising.
pub const NORM_FLOOR: f64 = 1e-12;

/// Scales every row to unit Euclidean norm. Returns the normalised matrix and
/// the (clamped) row norms used.
pub fn l2_normalize_rows(x: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>) {
    let mut out = x.to_owned();
    let mut norms = Vec::with_capacity(x.nrows());
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt().max(NORM_FLOOR);
        row.mapv_inplace(|v| v / n);
        norms.push(n);
    }
    (out, norms)
}

/// Backward of [`l2_normalize_rows`]: given the normalised rows `y`, the
/// norms, and `dL/dy`, returns `dL/dx = (g - y <y, g>) / ‖x‖`.
pub fn l2_normalize_rows_backward(y: ArrayView2<'_, f64>, norms: &[f64], grad: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(grad.raw_dim());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let yr = y.row(i);
        let gr = grad.row(i);
        let proj = yr.dot(&gr);
        let n = norms[i];
        for ((o, &yv), &gv) in row.iter_mut().zip(yr.iter()).zip(gr.iter()) {
            *o = (gv - yv * proj) / n;
        }
    }
    out
}
