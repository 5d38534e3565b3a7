//! Browser bindings for three interactive views: soft-DTW alignment of two
//! warped sequences, an augmentation preview, and contrastive similarities
//! under a temperature.
//!
//! The computations live in plain functions returning [`tfa_core::Result`]
//! so they can be tested natively; the `#[wasm_bindgen]` wrappers only
//! convert errors.

use ndarray::Array2;
use tfa_core::augment::{apply_augmentation, AugmentationKind, AugmentationSpec};
use tfa_core::contrastive::{cosine_similarity_matrix, ntxent_loss, ntxent_partner, DeltaForm};
use tfa_core::data::{generate_synthetic, SyntheticSpec};
use tfa_core::softdtw::{hard_dtw, pairwise_sq_distances, softdtw_grad, softdtw_value};
use tfa_core::{Error, Result, RngState};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Row-major matrices are exposed as flat vectors plus their shape.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct AlignmentView {
    rows: usize,
    cols: usize,
    value: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    distances: Vec<f64>,
    alignment: Vec<f64>,
    path: Vec<u32>,
}

#[wasm_bindgen]
impl AlignmentView {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[wasm_bindgen(getter)]
    pub fn value(&self) -> f64 {
        self.value
    }
    #[wasm_bindgen(getter)]
    pub fn a(&self) -> Vec<f64> {
        self.a.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn b(&self) -> Vec<f64> {
        self.b.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn distances(&self) -> Vec<f64> {
        self.distances.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn alignment(&self) -> Vec<f64> {
        self.alignment.clone()
    }
    /// Hard-DTW path as `[i0, j0, i1, j1, ...]`.
    #[wasm_bindgen(getter)]
    pub fn path(&self) -> Vec<u32> {
        self.path.clone()
    }
}

fn flat(x: &Array2<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

/// Two noisy sinusoids; the second runs on warped time `t' = (t/T)^warp`
/// and lags by `shift` of a cycle.
#[allow(clippy::too_many_arguments)]
pub fn alignment_view(
    len_a: usize,
    len_b: usize,
    cycles: f64,
    warp: f64,
    shift: f64,
    noise: f64,
    gamma: f64,
    seed: u64,
) -> Result<AlignmentView> {
    if len_a < 2 || len_b < 2 {
        return Err(Error::InvalidArgument("sequences need at least 2 steps".into()));
    }
    if !(warp > 0.0) {
        return Err(Error::InvalidArgument(format!("warp must be positive, got {warp}")));
    }
    let mut rng = RngState::new(seed);
    let tau = std::f64::consts::TAU;
    let a = Array2::from_shape_fn((len_a, 1), |(t, _)| {
        (tau * cycles * t as f64 / (len_a - 1) as f64).sin() + noise * rng.normal(0.0, 1.0)
    });
    let b = Array2::from_shape_fn((len_b, 1), |(t, _)| {
        let u = (t as f64 / (len_b - 1) as f64).powf(warp);
        (tau * (cycles * u - shift)).sin() + noise * rng.normal(0.0, 1.0)
    });
    let d = pairwise_sq_distances(a.view(), b.view())?;
    let (value, table) = softdtw_value(&d, gamma)?;
    let e = softdtw_grad(&d, &table, gamma)?;
    let (_, path) = hard_dtw(&d)?;
    Ok(AlignmentView {
        rows: len_a,
        cols: len_b,
        value,
        a: a.column(0).to_vec(),
        b: b.column(0).to_vec(),
        distances: flat(&d.0),
        alignment: flat(&e.0),
        path: path.iter().flat_map(|&(i, j)| [i as u32, j as u32]).collect(),
    })
}

#[wasm_bindgen(js_name = alignmentView)]
#[allow(clippy::too_many_arguments)]
pub fn alignment_view_js(
    len_a: usize,
    len_b: usize,
    cycles: f64,
    warp: f64,
    shift: f64,
    noise: f64,
    gamma: f64,
    seed: u64,
) -> std::result::Result<AlignmentView, JsError> {
    alignment_view(len_a, len_b, cycles, warp, shift, noise, gamma, seed).map_err(js)
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct AugmentView {
    steps: usize,
    channels: usize,
    original: Vec<f64>,
    augmented: Vec<f64>,
}

#[wasm_bindgen]
impl AugmentView {
    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> usize {
        self.steps
    }
    #[wasm_bindgen(getter)]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[wasm_bindgen(getter)]
    pub fn original(&self) -> Vec<f64> {
        self.original.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn augmented(&self) -> Vec<f64> {
        self.augmented.clone()
    }
}

/// The kind `name` with its single strength knob set: sigma for jitter and
/// scale, the angle for rotate, the segment count for permute, the roll
/// for shift and the kept fraction for resized_crop. Shear needs an even
/// channel count and is rejected on the 3-channel preview.
pub fn kind_with_strength(name: &str, strength: f64) -> Result<AugmentationKind> {
    let mut kind = AugmentationKind::default_for(name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown augmentation `{name}`")))?;
    match name {
        "permute" | "shift" => {
            let n = strength.round().max(1.0);
            let (lo, hi) = match kind.param_names() {
                [lo, hi] => (*lo, *hi),
                _ => unreachable!(),
            };
            kind.set_param(hi, n)?;
            kind.set_param(lo, n)?;
        }
        _ => kind.set_param(kind.param_names()[0], strength)?,
    }
    Ok(kind)
}

/// One window of synthetic class `class` (3 channels) and its augmented
/// copy.
pub fn augment_view(name: &str, strength: f64, class: usize, len: usize, seed: u64) -> Result<AugmentView> {
    let ds = generate_synthetic(&SyntheticSpec::new((class + 1).max(2), 1, len, 3, seed))?;
    let w = ds
        .windows
        .iter()
        .find(|w| w.label == Some(class))
        .ok_or_else(|| Error::InvalidArgument(format!("no window of class {class}")))?;
    let spec = AugmentationSpec::new(kind_with_strength(name, strength)?, 1.0)?;
    let mut rng = RngState::derive(seed, &[1]);
    let out = apply_augmentation(&spec, w, &mut rng)?;
    Ok(AugmentView {
        steps: len,
        channels: 3,
        original: flat(&w.values),
        augmented: flat(&out.values),
    })
}

#[wasm_bindgen(js_name = augmentView)]
pub fn augment_view_js(
    name: &str,
    strength: f64,
    class: usize,
    len: usize,
    seed: u64,
) -> std::result::Result<AugmentView, JsError> {
    augment_view(name, strength, class, len, seed).map_err(js)
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct SimilarityView {
    size: usize,
    loss: f64,
    positive_mass: f64,
    similarities: Vec<f64>,
    probabilities: Vec<f64>,
}

#[wasm_bindgen]
impl SimilarityView {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }
    /// NT-Xent over the batch.
    #[wasm_bindgen(getter)]
    pub fn loss(&self) -> f64 {
        self.loss
    }
    /// Mean softmax probability assigned to the positive partner.
    #[wasm_bindgen(getter, js_name = positiveMass)]
    pub fn positive_mass(&self) -> f64 {
        self.positive_mass
    }
    #[wasm_bindgen(getter)]
    pub fn similarities(&self) -> Vec<f64> {
        self.similarities.clone()
    }
    /// Row `i` holds the softmax of `sim(i, k) / tau` over `k != i`.
    #[wasm_bindgen(getter)]
    pub fn probabilities(&self) -> Vec<f64> {
        self.probabilities.clone()
    }
}

/// `pairs` instances in `dim` dimensions, each seen twice with Gaussian
/// view noise; rows `2k` and `2k + 1` are positives.
pub fn similarity_view(pairs: usize, dim: usize, noise: f64, tau: f64, seed: u64) -> Result<SimilarityView> {
    if pairs == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "need at least one pair and one dimension".into(),
        ));
    }
    let mut rng = RngState::new(seed);
    let anchors = Array2::from_shape_fn((pairs, dim), |_| rng.normal(0.0, 1.0));
    let z = Array2::from_shape_fn((2 * pairs, dim), |(r, c)| {
        anchors[[r / 2, c]] + noise * rng.normal(0.0, 1.0)
    });
    let sim = cosine_similarity_matrix(z.view(), z.view())?;
    let loss = ntxent_loss(z.view(), tau, DeltaForm::Scaled)?.value;
    let n = 2 * pairs;
    let mut probs = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let max = (0..n)
            .filter(|&k| k != i)
            .map(|k| sim.values[[i, k]])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for k in (0..n).filter(|&k| k != i) {
            let e = ((sim.values[[i, k]] - max) / tau).exp();
            probs[[i, k]] = e;
            total += e;
        }
        probs.row_mut(i).mapv_inplace(|p| p / total);
    }
    let positive_mass = (0..n).map(|i| probs[[i, ntxent_partner(i)]]).sum::<f64>() / n as f64;
    Ok(SimilarityView {
        size: n,
        loss,
        positive_mass,
        similarities: flat(&sim.values),
        probabilities: flat(&probs),
    })
}

#[wasm_bindgen(js_name = similarityView)]
pub fn similarity_view_js(
    pairs: usize,
    dim: usize,
    noise: f64,
    tau: f64,
    seed: u64,
) -> std::result::Result<SimilarityView, JsError> {
    similarity_view(pairs, dim, noise, tau, seed).map_err(js)
}
