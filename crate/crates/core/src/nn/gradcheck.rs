use crate::error::{Error, Result};
use crate::rng::RngState;

use super::params::ModelParams;

/// Worst disagreement between analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// `(parameter, offset, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central-difference check of the trainable parameters.
///
/// `loss(params, with_grad)` returns the loss; when `with_grad` is set it
/// must also accumulate gradients into `params` (they are zeroed first). At
/// most `max_coords` coordinates are checked, sampled with `seed`.
pub fn finite_difference_check<F>(
    params: &mut ModelParams,
    mut loss: F,
    epsilon: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ModelParams, bool) -> Result<f64>,
{
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    params.zero_grads();
    let base = loss(params, true)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at the base point".into()));
    }
    let analytic: Vec<Vec<f64>> = params.entries.iter().map(|e| e.tensor.grad.clone()).collect();

    let candidates: Vec<usize> = (0..params.num_values())
        .filter(|&k| {
            let (id, _) = params.locate(k).expect("in range");
            params.entries[id].trainable
        })
        .collect();
    let chosen: Vec<usize> = if candidates.len() <= max_coords {
        candidates
    } else {
        let mut rng = RngState::derive(seed, &[0x6c]);
        let mut picks: Vec<usize> = rng
            .sample_without_replacement(candidates.len(), max_coords)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        picks.sort_unstable();
        picks
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: chosen.len(),
        worst: None,
    };
    for k in chosen {
        let (id, off) = params.locate(k).expect("in range");
        let orig = params.by_id(id).value[off];
        params.by_id_mut(id).value[off] = orig + epsilon;
        let plus = loss(params, false);
        params.by_id_mut(id).value[off] = orig - epsilon;
        let minus = loss(params, false);
        params.by_id_mut(id).value[off] = orig;
        let (plus, minus) = (plus?, minus?);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss while perturbing `{}`[{off}]",
                params.entry_name(id)
            )));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[id][off];
        let rel = relative_error(a, numeric);
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((params.entry_name(id).to_string(), off, a, numeric));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn quadratic(p: &mut ModelParams, with_grad: bool) -> Result<f64> {
        let t = p.get_mut("theta").unwrap();
        if with_grad {
            let g: Vec<f64> = t.value.iter().map(|v| 2.0 * v).collect();
            t.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok(t.value.iter().map(|v| v * v).sum())
    }

    fn store(n: usize) -> ModelParams {
        let mut p = ModelParams::new();
        let mut t = Tensor::zeros(&[n]);
        t.value = (0..n).map(|i| i as f64 * 0.3 - 1.0).collect();
        p.insert("theta", t, true).unwrap();
        p
    }

    #[test]
    fn quadratic_exact() {
        let mut p = store(10);
        let r = finite_difference_check(&mut p, quadratic, 1e-4, 200, 0).unwrap();
        assert_eq!(r.coords_checked, 10);
        assert!(r.max_rel_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn coordinate_budget_respected() {
        let mut p = store(500);
        let r = finite_difference_check(&mut p, quadratic, 1e-4, 200, 3).unwrap();
        assert_eq!(r.coords_checked, 200);
    }

    #[test]
    fn non_finite_loss_is_error() {
        let mut p = store(3);
        let err = finite_difference_check(&mut p, |_, _| Ok(f64::NAN), 1e-4, 200, 0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn wrong_gradient_detected() {
        let mut p = store(4);
        let r = finite_difference_check(
            &mut p,
            |p, g| {
                let v = quadratic(p, false)?;
                if g {
                    p.get_mut("theta").unwrap().grad.fill(1.0);
                }
                Ok(v)
            },
            1e-4,
            200,
            0,
        )
        .unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn values_restored() {
        let mut p = store(6);
        let before = p.clone();
        finite_difference_check(&mut p, quadratic, 1e-3, 200, 0).unwrap();
        assert_eq!(p.get("theta").unwrap().value, before.get("theta").unwrap().value);
    }
}
