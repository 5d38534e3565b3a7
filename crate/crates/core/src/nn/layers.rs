use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{l2_normalize_rows, l2_normalize_rows_backward};
use crate::rng::RngState;

use super::params::{ModelParams, Tensor};

const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that the output has `ceil(T / stride)` steps.
    Same,
    /// No padding.
    Valid,
}

/// One operator. Matrices are `rows × features`: timesteps for sequence
/// layers, batch items for the dense heads.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Cross-correlation over rows. Weight layout `[kernel, in, out]`.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    /// `x W + b`, weight layout `[in, out]`.
    Affine {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    /// Mean over rows: `T × C → 1 × C`.
    MeanPoolTime,
    L2NormRows,
    /// Inverted dropout; identity in eval mode.
    Dropout {
        rate: f64,
    },
    /// Batch normalisation over rows with running statistics for eval.
    BatchNorm {
        features: usize,
        momentum: f64,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Affine { .. } => "affine",
            LayerSpec::Relu => "relu",
            LayerSpec::MeanPoolTime => "mean_pool_time",
            LayerSpec::L2NormRows => "l2norm_rows",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::BatchNorm { .. } => "batch_norm",
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0,
            LayerSpec::Affine { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerSpec::Dropout { rate } => (0.0..1.0).contains(&rate),
            LayerSpec::BatchNorm { features, momentum } => features > 0 && (0.0..=1.0).contains(&momentum),
            LayerSpec::Relu | LayerSpec::MeanPoolTime | LayerSpec::L2NormRows => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid {} layer: {self:?}",
                self.kind()
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
enum Cache {
    Input(Array2<f64>),
    Mask(Vec<bool>),
    Pool(usize),
    Norm {
        output: Array2<f64>,
        norms: Vec<f64>,
    },
    Dropout(Vec<f64>),
    BatchNorm {
        x_hat: Array2<f64>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    None,
}

/// Activations recorded by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    network: String,
    caches: Vec<Cache>,
}

impl Tape {
    pub fn is_recorded(&self) -> bool {
        !self.caches.is_empty()
    }
}

/// A named stack of layers. Parameters are stored as
/// `<name>.<layer index>.<weight|bias|...>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    name: String,
    layers: Vec<LayerSpec>,
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kinds: Vec<&str> = self.layers.iter().map(LayerSpec::kind).collect();
        write!(f, "{}[{}]", self.name, kinds.join(", "))
    }
}

fn conv_out_len(t: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = t.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(t);
            Some((out, total / 2))
        }
        Padding::Valid => (t >= kernel).then(|| ((t - kernel) / stride + 1, 0)),
    }
}

impl Network {
    pub fn new(name: &str, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(format!("network `{name}` has no layers")));
        }
        for l in &layers {
            l.validate()?;
        }
        Ok(Self {
            name: name.to_string(),
            layers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    fn pname(&self, layer: usize, what: &str) -> String {
        format!("{}.{layer}.{what}", self.name)
    }

    /// Width of the output rows for an input of `width` features.
    pub fn output_width(&self, mut width: usize) -> usize {
        for l in &self.layers {
            match *l {
                LayerSpec::Conv1d { out_channels, .. } => width = out_channels,
                LayerSpec::Affine { outputs, .. } => width = outputs,
                _ => {}
            }
        }
        width
    }

    /// Number of output rows for an input of `rows` rows, if valid.
    pub fn output_rows(&self, mut rows: usize) -> Option<usize> {
        for l in &self.layers {
            match *l {
                LayerSpec::Conv1d {
                    kernel,
                    stride,
                    padding,
                    ..
                } => rows = conv_out_len(rows, kernel, stride, padding)?.0,
                LayerSpec::MeanPoolTime => rows = 1,
                _ => {}
            }
        }
        Some(rows)
    }

    pub(crate) fn init_params(&self, params: &mut ModelParams, rng: &mut RngState) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            match *l {
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let bound = 1.0 / ((in_channels * kernel) as f64).sqrt();
                    let mut w = Tensor::zeros(&[kernel, in_channels, out_channels]);
                    w.value.iter_mut().for_each(|v| *v = rng.uniform_range(-bound, bound));
                    params.insert(&self.pname(i, "weight"), w, true)?;
                    params.insert(&self.pname(i, "bias"), Tensor::zeros(&[out_channels]), true)?;
                }
                LayerSpec::Affine { inputs, outputs } => {
                    let bound = 1.0 / (inputs as f64).sqrt();
                    let mut w = Tensor::zeros(&[inputs, outputs]);
                    w.value.iter_mut().for_each(|v| *v = rng.uniform_range(-bound, bound));
                    params.insert(&self.pname(i, "weight"), w, true)?;
                    params.insert(&self.pname(i, "bias"), Tensor::zeros(&[outputs]), true)?;
                }
                LayerSpec::BatchNorm { features, .. } => {
                    let mut g = Tensor::zeros(&[features]);
                    g.value.fill(1.0);
                    params.insert(&self.pname(i, "weight"), g, true)?;
                    params.insert(&self.pname(i, "bias"), Tensor::zeros(&[features]), true)?;
                    params.insert(&self.pname(i, "running_mean"), Tensor::zeros(&[features]), false)?;
                    let mut rv = Tensor::zeros(&[features]);
                    rv.value.fill(1.0);
                    params.insert(&self.pname(i, "running_var"), rv, false)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn shape_err(&self, layer: usize, msg: String) -> Error {
        Error::Shape(format!(
            "layer {}.{layer} ({}): {msg}",
            self.name,
            self.layers[layer].kind()
        ))
    }

    /// Forward pass. Train mode records a tape (and needs `rng` for dropout);
    /// eval mode returns an empty tape.
    pub fn forward(
        &self,
        params: &ModelParams,
        input: ArrayView2<'_, f64>,
        mode: Mode,
        mut rng: Option<&mut RngState>,
    ) -> Result<(Array2<f64>, Tape)> {
        let record = mode == Mode::Train;
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        let mut x = input.as_standard_layout().to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let (y, cache) = match *l {
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if x.ncols() != in_channels {
                        return Err(
                            self.shape_err(i, format!("expected {in_channels} input channels, got {}", x.ncols()))
                        );
                    }
                    let (t_out, pad) = conv_out_len(x.nrows(), kernel, stride, padding).ok_or_else(|| {
                        self.shape_err(i, format!("input length {} shorter than kernel {kernel}", x.nrows()))
                    })?;
                    let w = params.get(&self.pname(i, "weight")).ok_or_else(|| self.missing(i))?;
                    let b = params.get(&self.pname(i, "bias")).ok_or_else(|| self.missing(i))?;
                    let y = conv1d_forward(&x, &w.value, &b.value, out_channels, kernel, stride, pad, t_out);
                    (y, Cache::Input(x))
                }
                LayerSpec::Affine { inputs, .. } => {
                    if x.ncols() != inputs {
                        return Err(self.shape_err(i, format!("expected {inputs} inputs, got {}", x.ncols())));
                    }
                    let w = self.weight_matrix(params, i)?;
                    let b = params.get(&self.pname(i, "bias")).ok_or_else(|| self.missing(i))?;
                    let mut y = x.dot(&w);
                    for mut row in y.rows_mut() {
                        row.iter_mut().zip(&b.value).for_each(|(v, bv)| *v += bv);
                    }
                    (y, Cache::Input(x))
                }
                LayerSpec::Relu => {
                    let mask: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
                    let y = x.mapv(|v| v.max(0.0));
                    (y, Cache::Mask(mask))
                }
                LayerSpec::MeanPoolTime => {
                    let t = x.nrows();
                    if t == 0 {
                        return Err(self.shape_err(i, "cannot pool an empty sequence".into()));
                    }
                    let y = x.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
                    (y, Cache::Pool(t))
                }
                LayerSpec::L2NormRows => {
                    let (y, norms) = l2_normalize_rows(x.view());
                    let cache = Cache::Norm {
                        output: y.clone(),
                        norms,
                    };
                    (y, cache)
                }
                LayerSpec::Dropout { rate } => {
                    if mode == Mode::Eval || rate == 0.0 {
                        (x, Cache::None)
                    } else {
                        let r = rng.as_deref_mut().ok_or_else(|| {
                            Error::InvalidArgument(format!("{}: dropout needs an rng in train mode", self.name))
                        })?;
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| if r.uniform() >= rate { keep } else { 0.0 })
                            .collect();
                        let mut y = x;
                        y.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        (y, Cache::Dropout(mask))
                    }
                }
                LayerSpec::BatchNorm { features, .. } => {
                    if x.ncols() != features {
                        return Err(self.shape_err(i, format!("expected {features} features, got {}", x.ncols())));
                    }
                    let gamma = &params
                        .get(&self.pname(i, "weight"))
                        .ok_or_else(|| self.missing(i))?
                        .value;
                    let beta = &params.get(&self.pname(i, "bias")).ok_or_else(|| self.missing(i))?.value;
                    let n = x.nrows();
                    let (mean, var) = if mode == Mode::Train {
                        if n < 2 {
                            return Err(
                                self.shape_err(i, "batch normalisation needs at least 2 rows in train mode".into())
                            );
                        }
                        let mean: Vec<f64> = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
                        let var: Vec<f64> = (0..features)
                            .map(|c| x.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n as f64)
                            .collect();
                        (mean, var)
                    } else {
                        (
                            params
                                .get(&self.pname(i, "running_mean"))
                                .ok_or_else(|| self.missing(i))?
                                .value
                                .clone(),
                            params
                                .get(&self.pname(i, "running_var"))
                                .ok_or_else(|| self.missing(i))?
                                .value
                                .clone(),
                        )
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                    let x_hat = Array2::from_shape_fn(x.raw_dim(), |(r, c)| (x[[r, c]] - mean[c]) * inv_std[c]);
                    let y = Array2::from_shape_fn(x.raw_dim(), |(r, c)| gamma[c] * x_hat[[r, c]] + beta[c]);
                    (
                        y,
                        Cache::BatchNorm {
                            x_hat,
                            inv_std,
                            mean,
                            var,
                        },
                    )
                }
            };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "output of layer {}.{i} ({})",
                    self.name,
                    l.kind()
                )));
            }
            if record {
                caches.push(cache);
            }
            x = y;
        }
        Ok((
            x,
            Tape {
                network: self.name.clone(),
                caches,
            },
        ))
    }

    /// Eval-mode forward without a tape.
    pub fn infer(&self, params: &ModelParams, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(params, input, Mode::Eval, None)?.0)
    }

    fn missing(&self, layer: usize) -> Error {
        Error::InvalidArgument(format!("parameters for layer {}.{layer} are missing", self.name))
    }

    fn weight_matrix(&self, params: &ModelParams, i: usize) -> Result<Array2<f64>> {
        let w = params.get(&self.pname(i, "weight")).ok_or_else(|| self.missing(i))?;
        Array2::from_shape_vec((w.shape[0], w.shape[1]), w.value.clone()).map_err(|e| Error::Shape(e.to_string()))
    }

    /// Backpropagates `grad_output` through the recorded tape, accumulating
    /// parameter gradients in `params`, and returns the input gradient.
    pub fn backward(
        &self,
        params: &mut ModelParams,
        tape: &Tape,
        grad_output: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        if tape.network != self.name || tape.caches.len() != self.layers.len() {
            return Err(Error::BackwardWithoutForward(self.name.clone()));
        }
        let mut g = grad_output.as_standard_layout().to_owned();
        for (i, (l, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            g = match (l, cache) {
                (
                    &LayerSpec::Conv1d {
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        ..
                    },
                    Cache::Input(x),
                ) => {
                    let (t_out, pad) = conv_out_len(x.nrows(), kernel, stride, padding).expect("validated in forward");
                    if g.dim() != (t_out, out_channels) {
                        return Err(self.shape_err(
                            i,
                            format!("gradient shape {:?}, expected {:?}", g.dim(), (t_out, out_channels)),
                        ));
                    }
                    let wid = params.id(&self.pname(i, "weight"))?;
                    let bid = params.id(&self.pname(i, "bias"))?;
                    let w = params.by_id(wid).value.clone();
                    let mut gw = vec![0.0; w.len()];
                    let mut gb = vec![0.0; out_channels];
                    let gx = conv1d_backward(x, &w, &g, &mut gw, &mut gb, kernel, stride, pad);
                    add_into(&mut params.by_id_mut(wid).grad, &gw);
                    add_into(&mut params.by_id_mut(bid).grad, &gb);
                    gx
                }
                (LayerSpec::Affine { .. }, Cache::Input(x)) => {
                    let w = self.weight_matrix(params, i)?;
                    if g.dim() != (x.nrows(), w.ncols()) {
                        return Err(self.shape_err(i, format!("gradient shape {:?}", g.dim())));
                    }
                    let gw = x.t().dot(&g);
                    let gb = g.sum_axis(Axis(0));
                    let wid = params.id(&self.pname(i, "weight"))?;
                    let bid = params.id(&self.pname(i, "bias"))?;
                    add_into(
                        &mut params.by_id_mut(wid).grad,
                        gw.as_standard_layout().as_slice().expect("contiguous"),
                    );
                    add_into(&mut params.by_id_mut(bid).grad, gb.as_slice().expect("contiguous"));
                    g.dot(&w.t())
                }
                (LayerSpec::Relu, Cache::Mask(mask)) => {
                    let mut g = g;
                    g.iter_mut().zip(mask).for_each(|(v, &m)| {
                        if !m {
                            *v = 0.0
                        }
                    });
                    g
                }
                (LayerSpec::MeanPoolTime, Cache::Pool(t)) => {
                    let row = g.row(0).mapv(|v| v / *t as f64);
                    let mut out = Array2::zeros((*t, g.ncols()));
                    for mut r in out.rows_mut() {
                        r.assign(&row);
                    }
                    out
                }
                (LayerSpec::L2NormRows, Cache::Norm { output, norms }) => {
                    l2_normalize_rows_backward(output.view(), norms, g.view())
                }
                (LayerSpec::Dropout { .. }, Cache::Dropout(mask)) => {
                    let mut g = g;
                    g.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                    g
                }
                (LayerSpec::Dropout { .. }, Cache::None) => g,
                (&LayerSpec::BatchNorm { features, .. }, Cache::BatchNorm { x_hat, inv_std, .. }) => {
                    let wid = params.id(&self.pname(i, "weight"))?;
                    let bid = params.id(&self.pname(i, "bias"))?;
                    let gamma = params.by_id(wid).value.clone();
                    let n = g.nrows() as f64;
                    let mut ggamma = vec![0.0; features];
                    let mut gbeta = vec![0.0; features];
                    let mut gx = Array2::zeros(g.raw_dim());
                    for c in 0..features {
                        let gc = g.column(c);
                        let xh = x_hat.column(c);
                        let sum_g: f64 = gc.sum();
                        let sum_gx: f64 = gc.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
                        ggamma[c] = sum_gx;
                        gbeta[c] = sum_g;
                        let k = gamma[c] * inv_std[c] / n;
                        for r in 0..g.nrows() {
                            gx[[r, c]] = k * (n * g[[r, c]] - sum_g - xh[r] * sum_gx);
                        }
                    }
                    add_into(&mut params.by_id_mut(wid).grad, &ggamma);
                    add_into(&mut params.by_id_mut(bid).grad, &gbeta);
                    gx
                }
                _ => return Err(Error::BackwardWithoutForward(format!("{}.{i}", self.name))),
            };
        }
        Ok(g)
    }

    /// Folds the batch statistics recorded in `tape` into the running
    /// statistics of every batch-norm layer.
    pub fn update_running_stats(&self, params: &mut ModelParams, tape: &Tape) -> Result<()> {
        if tape.network != self.name || tape.caches.len() != self.layers.len() {
            return Err(Error::BackwardWithoutForward(self.name.clone()));
        }
        for (i, (l, cache)) in self.layers.iter().zip(&tape.caches).enumerate() {
            if let (&LayerSpec::BatchNorm { momentum, .. }, Cache::BatchNorm { mean, var, .. }) = (l, cache) {
                let rm = params
                    .get_mut(&self.pname(i, "running_mean"))
                    .ok_or_else(|| self.missing(i))?;
                rm.value
                    .iter_mut()
                    .zip(mean)
                    .for_each(|(r, m)| *r = momentum * *r + (1.0 - momentum) * m);
                let rv = params
                    .get_mut(&self.pname(i, "running_var"))
                    .ok_or_else(|| self.missing(i))?;
                rv.value
                    .iter_mut()
                    .zip(var)
                    .for_each(|(r, v)| *r = momentum * *r + (1.0 - momentum) * v);
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

#[allow(clippy::too_many_arguments)]
fn conv1d_forward(
    x: &Array2<f64>,
    w: &[f64],
    b: &[f64],
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    t_out: usize,
) -> Array2<f64> {
    let (t_in, cin) = x.dim();
    let xs = x.as_slice().expect("standard layout");
    let mut out = vec![0.0; t_out * cout];
    for to in 0..t_out {
        let orow = &mut out[to * cout..(to + 1) * cout];
        orow.copy_from_slice(b);
        for k in 0..kernel {
            let pos = (to * stride + k) as isize - pad as isize;
            if pos < 0 || pos as usize >= t_in {
                continue;
            }
            let xrow = &xs[pos as usize * cin..(pos as usize + 1) * cin];
            for (c, &xv) in xrow.iter().enumerate() {
                let wrow = &w[(k * cin + c) * cout..(k * cin + c + 1) * cout];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    Array2::from_shape_vec((t_out, cout), out).expect("sized")
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward(
    x: &Array2<f64>,
    w: &[f64],
    g: &Array2<f64>,
    gw: &mut [f64],
    gb: &mut [f64],
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Array2<f64> {
    let (t_in, cin) = x.dim();
    let (t_out, cout) = g.dim();
    let xs = x.as_slice().expect("standard layout");
    let gs = g.as_slice().expect("standard layout");
    let mut gx = vec![0.0; t_in * cin];
    for to in 0..t_out {
        let grow = &gs[to * cout..(to + 1) * cout];
        gb.iter_mut().zip(grow).for_each(|(a, b)| *a += b);
        for k in 0..kernel {
            let pos = (to * stride + k) as isize - pad as isize;
            if pos < 0 || pos as usize >= t_in {
                continue;
            }
            let p = pos as usize;
            for c in 0..cin {
                let xv = xs[p * cin + c];
                let base = (k * cin + c) * cout;
                let wrow = &w[base..base + cout];
                let gwrow = &mut gw[base..base + cout];
                let mut acc = 0.0;
                for ((gwv, &wv), &gv) in gwrow.iter_mut().zip(wrow).zip(grow) {
                    *gwv += xv * gv;
                    acc += wv * gv;
                }
                gx[p * cin + c] += acc;
            }
        }
    }
    Array2::from_shape_vec((t_in, cin), gx).expect("sized")
}
