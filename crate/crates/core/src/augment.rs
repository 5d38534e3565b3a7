//! Stochastic time-series augmentations.
//!
//! Each augmentation maps a `T × S` window to a window of the same shape and
//! label. Randomness always comes from a caller-owned [`RngState`].

use std::fmt;

use ndarray::Array2;

use crate::data::TimeWindow;
use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Clone, Debug, PartialEq)]
pub enum AugmentationKind {
    /// Additive i.i.d. Gaussian noise.
    Jitter { sigma: f64 },
    /// Per-channel multiplicative factor drawn from `Normal(1, sigma)`.
    Scale { sigma: f64 },
    /// One random 3D rotation applied to every channel triad.
    Rotate { max_angle: f64 },
    /// Split into `m` equal segments (`m` uniform in the range) and shuffle.
    Permute { min_segments: usize, max_segments: usize },
    /// Circular roll by a uniform integer number of timesteps.
    Shift { min: usize, max: usize },
    /// Random contiguous crop, linearly resampled back to `T`.
    ResizedCrop { min_fraction: f64 },
    /// 2D shear of channel pairs with factors uniform in `[-range, range]`.
    Shear { range: f64 },
}

impl AugmentationKind {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentationKind::Jitter { .. } => "jitter",
            AugmentationKind::Scale { .. } => "scale",
            AugmentationKind::Rotate { .. } => "rotate",
            AugmentationKind::Permute { .. } => "permute",
            AugmentationKind::Shift { .. } => "shift",
            AugmentationKind::ResizedCrop { .. } => "resized_crop",
            AugmentationKind::Shear { .. } => "shear",
        }
    }

    /// The kind with its default parameters.
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "jitter" => AugmentationKind::Jitter { sigma: 0.05 },
            "scale" => AugmentationKind::Scale { sigma: 0.1 },
            "rotate" => AugmentationKind::Rotate {
                max_angle: std::f64::consts::PI,
            },
            "permute" => AugmentationKind::Permute {
                min_segments: 2,
                max_segments: 5,
            },
            "shift" => AugmentationKind::Shift { min: 5, max: 10 },
            "resized_crop" => AugmentationKind::ResizedCrop { min_fraction: 0.5 },
            "shear" => AugmentationKind::Shear { range: 0.3 },
            _ => return None,
        })
    }

    /// Parameter names accepted for this kind, in declaration order.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            AugmentationKind::Jitter { .. } | AugmentationKind::Scale { .. } => &["sigma"],
            AugmentationKind::Rotate { .. } => &["max_angle"],
            AugmentationKind::Permute { .. } => &["min_segments", "max_segments"],
            AugmentationKind::Shift { .. } => &["min", "max"],
            AugmentationKind::ResizedCrop { .. } => &["min_fraction"],
            AugmentationKind::Shear { .. } => &["range"],
        }
    }

    /// Current value of a parameter as a real.
    pub fn param(&self, name: &str) -> Option<f64> {
        Some(match (self, name) {
            (AugmentationKind::Jitter { sigma }, "sigma") | (AugmentationKind::Scale { sigma }, "sigma") => *sigma,
            (AugmentationKind::Rotate { max_angle }, "max_angle") => *max_angle,
            (AugmentationKind::Permute { min_segments, .. }, "min_segments") => *min_segments as f64,
            (AugmentationKind::Permute { max_segments, .. }, "max_segments") => *max_segments as f64,
            (AugmentationKind::Shift { min, .. }, "min") => *min as f64,
            (AugmentationKind::Shift { max, .. }, "max") => *max as f64,
            (AugmentationKind::ResizedCrop { min_fraction }, "min_fraction") => *min_fraction,
            (AugmentationKind::Shear { range }, "range") => *range,
            _ => return None,
        })
    }

    /// Sets a parameter; integer parameters must be whole non-negative numbers.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let kind = self.name();
        let as_count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidArgument(format!(
                    "{kind}.{name} must be a non-negative integer, got {value}"
                )))
            }
        };
        match (&mut *self, name) {
            (AugmentationKind::Jitter { sigma }, "sigma") | (AugmentationKind::Scale { sigma }, "sigma") => {
                *sigma = value
            }
            (AugmentationKind::Rotate { max_angle }, "max_angle") => *max_angle = value,
            (AugmentationKind::Permute { min_segments, .. }, "min_segments") => *min_segments = as_count()?,
            (AugmentationKind::Permute { max_segments, .. }, "max_segments") => *max_segments = as_count()?,
            (AugmentationKind::Shift { min, .. }, "min") => *min = as_count()?,
            (AugmentationKind::Shift { max, .. }, "max") => *max = as_count()?,
            (AugmentationKind::ResizedCrop { min_fraction }, "min_fraction") => *min_fraction = value,
            (AugmentationKind::Shear { range }, "range") => *range = value,
            _ => return Err(Error::InvalidArgument(format!("{kind} has no parameter `{name}`"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{}: {what}", self.name())));
        match *self {
            AugmentationKind::Jitter { sigma } | AugmentationKind::Scale { sigma } if !(sigma >= 0.0) => {
                bad("sigma must be non-negative")
            }
            AugmentationKind::Rotate { max_angle } if !(0.0..=std::f64::consts::PI).contains(&max_angle) => {
                bad("max_angle must lie in [0, pi]")
            }
            AugmentationKind::Permute {
                min_segments,
                max_segments,
            } if min_segments == 0 || min_segments > max_segments => bad("need 1 <= min_segments <= max_segments"),
            AugmentationKind::Shift { min, max } if min > max => bad("need min <= max"),
            AugmentationKind::ResizedCrop { min_fraction } if !(min_fraction > 0.0 && min_fraction <= 1.0) => {
                bad("min_fraction must lie in (0, 1]")
            }
            AugmentationKind::Shear { range } if !(range >= 0.0) => bad("range must be non-negative"),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    pub probability: f64,
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, probability: f64) -> Result<Self> {
        let spec = Self { kind, probability };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidArgument(format!(
                "{}: probability {} outside [0, 1]",
                self.kind.name(),
                self.probability
            )));
        }
        self.kind.validate()
    }
}

impl fmt::Display for AugmentationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(p={})", self.kind.name(), self.probability)
    }
}

/// Applies one augmentation unconditionally (`spec.probability` is
/// handled by [`compose_pipeline`]).
pub fn apply_augmentation(spec: &AugmentationSpec, w: &TimeWindow, rng: &mut RngState) -> Result<TimeWindow> {
    spec.validate()?;
    let (t, s) = w.values.dim();
    let x = &w.values;
    let values = match spec.kind {
        AugmentationKind::Jitter { sigma } => {
            if sigma == 0.0 {
                x.clone()
            } else {
                x.mapv(|v| v + rng.normal(0.0, sigma))
            }
        }
        AugmentationKind::Scale { sigma } => {
            let factors: Vec<f64> = (0..s).map(|_| rng.normal(1.0, sigma)).collect();
            Array2::from_shape_fn((t, s), |(i, c)| x[[i, c]] * factors[c])
        }
        AugmentationKind::Rotate { max_angle } => {
            if s % 3 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "rotate needs a channel count divisible by 3, got {s}"
                )));
            }
            let r = random_rotation(max_angle, rng);
            rotate_triads(x, &r)
        }
        AugmentationKind::Permute {
            min_segments,
            max_segments,
        } => {
            let m = rng.int_inclusive(min_segments, max_segments).min(t.max(1));
            let mut order: Vec<usize> = (0..m).collect();
            rng.shuffle(&mut order);
            permute_segments(x, &order)
        }
        AugmentationKind::Shift { min, max } => {
            let n = rng.int_inclusive(min, max);
            roll(x, n)
        }
        AugmentationKind::ResizedCrop { min_fraction } => {
            let min_len = ((min_fraction * t as f64).ceil() as usize).clamp(1, t);
            let len = rng.int_inclusive(min_len, t);
            let start = rng.int_inclusive(0, t - len);
            resample_crop(x, start, len)
        }
        AugmentationKind::Shear { range } => {
            if s % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "shear needs an even channel count, got {s}"
                )));
            }
            let a = rng.uniform_range(-range, range);
            let b = rng.uniform_range(-range, range);
            let mut out = x.clone();
            for i in 0..t {
                for p in (0..s).step_by(2) {
                    let (u, v) = (x[[i, p]], x[[i, p + 1]]);
                    out[[i, p]] = u + a * v;
                    out[[i, p + 1]] = v + b * u;
                }
            }
            out
        }
    };
    Ok(TimeWindow::new(values, w.label))
}

/// Rodrigues rotation about a uniformly random axis by an angle uniform in
/// `[0, max_angle]`.
fn random_rotation(max_angle: f64, rng: &mut RngState) -> [[f64; 3]; 3] {
    let axis = loop {
        let v = [rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            break [v[0] / n, v[1] / n, v[2] / n];
        }
    };
    let angle = rng.uniform_range(0.0, max_angle);
    rotation_matrix(axis, angle)
}

pub(crate) fn rotation_matrix(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let (x, y, z) = (axis[0], axis[1], axis[2]);
    let (sn, cs) = angle.sin_cos();
    let k = 1.0 - cs;
    [
        [cs + x * x * k, x * y * k - z * sn, x * z * k + y * sn],
        [y * x * k + z * sn, cs + y * y * k, y * z * k - x * sn],
        [z * x * k - y * sn, z * y * k + x * sn, cs + z * z * k],
    ]
}

fn rotate_triads(x: &Array2<f64>, r: &[[f64; 3]; 3]) -> Array2<f64> {
    let (t, s) = x.dim();
    let mut out = Array2::zeros((t, s));
    for i in 0..t {
        for g in (0..s).step_by(3) {
            let v = [x[[i, g]], x[[i, g + 1]], x[[i, g + 2]]];
            for (row, coeffs) in r.iter().enumerate() {
                out[[i, g + row]] = coeffs[0] * v[0] + coeffs[1] * v[1] + coeffs[2] * v[2];
            }
        }
    }
    out
}

/// Reorders `order.len()` near-equal segments (boundaries at `floor(k T / m)`).
fn permute_segments(x: &Array2<f64>, order: &[usize]) -> Array2<f64> {
    let t = x.nrows();
    let m = order.len();
    let bound = |k: usize| k * t / m;
    let mut out = Array2::zeros(x.raw_dim());
    let mut dst = 0;
    for &seg in order {
        for src in bound(seg)..bound(seg + 1) {
            out.row_mut(dst).assign(&x.row(src));
            dst += 1;
        }
    }
    out
}

/// Circular roll forward in time: `out[t] = x[(t - n) mod T]`.
fn roll(x: &Array2<f64>, n: usize) -> Array2<f64> {
    let t = x.nrows();
    if t == 0 {
        return x.clone();
    }
    let mut out = Array2::zeros(x.raw_dim());
    for i in 0..t {
        out.row_mut((i + n) % t).assign(&x.row(i));
    }
    out
}

fn resample_crop(x: &Array2<f64>, start: usize, len: usize) -> Array2<f64> {
    let (t, s) = x.dim();
    let mut out = Array2::zeros((t, s));
    for i in 0..t {
        let pos = if t > 1 {
            start as f64 + i as f64 * (len - 1) as f64 / (t - 1) as f64
        } else {
            start as f64
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(start + len - 1);
        let frac = pos - lo as f64;
        for c in 0..s {
            out[[i, c]] = x[[lo, c]] * (1.0 - frac) + x[[hi, c]] * frac;
        }
    }
    out
}

/// Applies each spec in order, each gated by an independent
/// `Bernoulli(probability)` draw.
pub fn compose_pipeline(specs: &[AugmentationSpec], w: &TimeWindow, rng: &mut RngState) -> Result<TimeWindow> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("augmentation pipeline is empty".into()));
    }
    let mut out = w.clone();
    for spec in specs {
        if rng.uniform() < spec.probability {
            out = apply_augmentation(spec, &out, rng)?;
        }
    }
    Ok(out)
}

/// Two independent passes of the pipeline over the same window. An empty
/// pipeline yields two copies of the input.
pub fn make_views(w: &TimeWindow, specs: &[AugmentationSpec], rng: &mut RngState) -> Result<(TimeWindow, TimeWindow)> {
    if specs.is_empty() {
        return Ok((w.clone(), w.clone()));
    }
    let a = compose_pipeline(specs, w, rng)?;
    let b = compose_pipeline(specs, w, rng)?;
    Ok((a, b))
}

/// Single augmented view, or the input when the pipeline is empty.
pub fn augment_or_identity(w: &TimeWindow, specs: &[AugmentationSpec], rng: &mut RngState) -> Result<TimeWindow> {
    if specs.is_empty() {
        Ok(w.clone())
    } else {
        compose_pipeline(specs, w, rng)
    }
}
