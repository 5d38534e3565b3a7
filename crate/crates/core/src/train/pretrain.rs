use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};

use crate::augment::{augment_or_identity, make_views, AugmentationKind, AugmentationSpec};
use crate::contrastive::{cmc_loss, combined_objective, ntxent_loss, DeltaForm};
use crate::data::{TimeWindow, WindowedDataset};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, EncoderConfig, Mode, ModelParams, Tape};
use crate::output::fmt_g9;
use crate::rng::RngState;
use crate::softdtw::tfa_batch_loss;

use super::{ContrastiveModel, Stream};

const KEY_SHUFFLE: u64 = 0x5f;
const KEY_AUGMENT: u64 = 0xa6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PretrainMode {
    Unimodal,
    Multimodal,
}

impl PretrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PretrainMode::Unimodal => "unimodal",
            PretrainMode::Multimodal => "multimodal",
        }
    }
}

impl fmt::Display for PretrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PretrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unimodal" => Ok(PretrainMode::Unimodal),
            "multimodal" => Ok(PretrainMode::Multimodal),
            other => Err(Error::InvalidArgument(format!(
                "unknown pretraining mode `{other}`, expected unimodal or multimodal"
            ))),
        }
    }
}

/// Loss hyperparameters shared by both pretraining modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSettings {
    pub tau: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub delta: DeltaForm,
    pub tfa_enabled: bool,
}

impl Default for LossSettings {
    fn default() -> Self {
        Self {
            tau: 0.1,
            gamma: 0.1,
            alpha: 0.1,
            delta: DeltaForm::Scaled,
            tfa_enabled: true,
        }
    }
}

impl LossSettings {
    /// The alignment branch runs only when enabled with a positive weight;
    /// otherwise it is skipped entirely and reported as 0.
    pub fn tfa_active(&self) -> bool {
        self.tfa_enabled && self.alpha > 0.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.gamma > 0.0) || !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need tau > 0, gamma > 0 and alpha >= 0 (got {}, {}, {})",
                self.tau, self.gamma, self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub mode: PretrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: LossSettings,
    /// Pipeline of the unimodal views, or of stream A.
    pub augment_a: Vec<AugmentationSpec>,
    pub augment_b: Vec<AugmentationSpec>,
    /// Encoder shape; input channels are taken from the data.
    pub encoder: EncoderConfig,
    pub seed: u64,
}

/// Jitter, per-channel scaling with σ = 0.3, a random rotation when the
/// channels form triads and a 5–10 step circular shift, each with
/// probability 0.75.
pub fn default_pipeline(channels: usize) -> Vec<AugmentationSpec> {
    let kinds: &[&str] = if channels.is_multiple_of(3) {
        &["jitter", "scale", "rotate", "shift"]
    } else {
        &["jitter", "scale", "shift"]
    };
    kinds
        .iter()
        .map(|k| {
            let mut kind = AugmentationKind::default_for(k).expect("known kind");
            if let AugmentationKind::Scale { sigma } = &mut kind {
                *sigma = 0.3;
            }
            AugmentationSpec {
                kind,
                probability: 0.75,
            }
        })
        .collect()
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            mode: PretrainMode::Unimodal,
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            loss: LossSettings::default(),
            augment_a: default_pipeline(1),
            augment_b: default_pipeline(1),
            encoder: EncoderConfig::new(1),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    fn validate(&self, expected: PretrainMode) -> Result<()> {
        if self.mode != expected {
            return Err(Error::InvalidArgument(format!(
                "config mode is {}, expected {expected}",
                self.mode
            )));
        }
        self.loss.validate()?;
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be at least 2".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        for spec in self.augment_a.iter().chain(&self.augment_b) {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Loss components of one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub loss_c: f64,
    pub loss_tfa: f64,
    pub loss: f64,
    /// Directed two-stream means `(a→b, b→a)`.
    pub directed: Option<(f64, f64)>,
}

/// Batch means of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_c: f64,
    pub loss_tfa: f64,
    pub loss: f64,
    pub directed: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    pub epochs: Vec<EpochLoss>,
    pub seed: u64,
}

impl PretrainReport {
    /// `epoch,loss_c,loss_tfa,loss`, plus the directed losses for two
    /// streams.
    pub fn to_csv(&self) -> String {
        let directed = self.epochs.iter().any(|e| e.directed.is_some());
        let mut out = String::from("epoch,loss_c,loss_tfa,loss");
        if directed {
            out.push_str(",loss_a_to_b,loss_b_to_a");
        }
        out.push('\n');
        for e in &self.epochs {
            let _ = write!(
                out,
                "{},{},{},{}",
                e.epoch,
                fmt_g9(e.loss_c),
                fmt_g9(e.loss_tfa),
                fmt_g9(e.loss)
            );
            if let Some((ab, ba)) = e.directed {
                let _ = write!(out, ",{},{}", fmt_g9(ab), fmt_g9(ba));
            }
            out.push('\n');
        }
        out
    }
}

struct Forward {
    features: Array2<f64>,
    encoder_tape: Option<Tape>,
    projection_tape: Option<Tape>,
}

fn forward_stream(
    stream: &Stream,
    params: &ModelParams,
    views: &[Array2<f64>],
    with_grad: bool,
) -> Result<(Vec<Forward>, Array2<f64>)> {
    let mode = if with_grad { Mode::Train } else { Mode::Eval };
    let mut out = Vec::with_capacity(views.len());
    let mut z: Option<Array2<f64>> = None;
    for (r, v) in views.iter().enumerate() {
        let (h, et) = stream.encoder.forward(params, v.view(), mode, None)?;
        let (zr, pt) = stream.projection.forward(params, h.view(), mode, None)?;
        let z = z.get_or_insert_with(|| Array2::zeros((views.len(), zr.ncols())));
        z.row_mut(r).assign(&zr.row(0));
        out.push(Forward {
            features: h,
            encoder_tape: with_grad.then_some(et),
            projection_tape: with_grad.then_some(pt),
        });
    }
    let z = z.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    Ok((out, z))
}

fn backward_stream(
    stream: &Stream,
    params: &mut ModelParams,
    fwd: &[Forward],
    grad_z: ArrayView2<'_, f64>,
    grad_h: &[Option<&Array2<f64>>],
    alpha: f64,
) -> Result<()> {
    for (r, f) in fwd.iter().enumerate() {
        let (Some(et), Some(pt)) = (&f.encoder_tape, &f.projection_tape) else {
            return Err(Error::BackwardWithoutForward(stream.encoder.name().to_string()));
        };
        let mut gh = stream.projection.backward(params, pt, grad_z.slice(s![r..r + 1, ..]))?;
        if let Some(g) = grad_h[r] {
            gh.scaled_add(alpha, g);
        }
        stream.encoder.backward(params, et, gh.view())?;
    }
    Ok(())
}

/// Combined loss of one unimodal batch. `views` holds `2N` windows where
/// rows `2k` and `2k+1` are the two views of instance `k`. With `with_grad`
/// the gradients are accumulated into `params` (not zeroed here).
pub fn unimodal_step_loss(
    stream: &Stream,
    params: &mut ModelParams,
    views: &[Array2<f64>],
    loss: &LossSettings,
    with_grad: bool,
) -> Result<BatchLoss> {
    let (fwd, z) = forward_stream(stream, params, views, with_grad)?;
    let lc = ntxent_loss(z.view(), loss.tau, loss.delta)?;
    let tfa = if loss.tfa_active() {
        let pairs: Vec<_> = fwd
            .chunks_exact(2)
            .map(|p| (p[0].features.view(), p[1].features.view()))
            .collect();
        Some(tfa_batch_loss(&pairs, loss.gamma)?)
    } else {
        None
    };
    let loss_tfa = tfa.as_ref().map_or(0.0, |t| t.value);
    if with_grad {
        let grad_h: Vec<Option<&Array2<f64>>> = (0..fwd.len())
            .map(|r| {
                tfa.as_ref().map(|t| {
                    let (ga, gb) = &t.feature_grads[r / 2];
                    if r % 2 == 0 {
                        ga
                    } else {
                        gb
                    }
                })
            })
            .collect();
        backward_stream(stream, params, &fwd, lc.grads[0].view(), &grad_h, loss.alpha)?;
    }
    Ok(BatchLoss {
        loss_c: lc.value,
        loss_tfa,
        loss: combined_objective(lc.value, loss_tfa, loss.alpha),
        directed: None,
    })
}

/// Combined loss of one two-stream batch; row `j` of each stream is the
/// same instance.
pub fn multimodal_step_loss(
    stream_a: &Stream,
    stream_b: &Stream,
    params: &mut ModelParams,
    views_a: &[Array2<f64>],
    views_b: &[Array2<f64>],
    loss: &LossSettings,
    with_grad: bool,
) -> Result<BatchLoss> {
    if views_a.len() != views_b.len() {
        return Err(Error::Shape(format!(
            "streams have {} and {} views",
            views_a.len(),
            views_b.len()
        )));
    }
    let (fa, za) = forward_stream(stream_a, params, views_a, with_grad)?;
    let (fb, zb) = forward_stream(stream_b, params, views_b, with_grad)?;
    let (lc, directed) = cmc_loss(za.view(), zb.view(), loss.tau, loss.delta)?;
    let tfa = if loss.tfa_active() {
        let pairs: Vec<_> = fa
            .iter()
            .zip(&fb)
            .map(|(a, b)| (a.features.view(), b.features.view()))
            .collect();
        Some(tfa_batch_loss(&pairs, loss.gamma)?)
    } else {
        None
    };
    let loss_tfa = tfa.as_ref().map_or(0.0, |t| t.value);
    if with_grad {
        let ga: Vec<_> = (0..fa.len())
            .map(|r| tfa.as_ref().map(|t| &t.feature_grads[r].0))
            .collect();
        let gb: Vec<_> = (0..fb.len())
            .map(|r| tfa.as_ref().map(|t| &t.feature_grads[r].1))
            .collect();
        backward_stream(stream_a, params, &fa, lc.grads[0].view(), &ga, loss.alpha)?;
        backward_stream(stream_b, params, &fb, lc.grads[1].view(), &gb, loss.alpha)?;
    }
    Ok(BatchLoss {
        loss_c: lc.value,
        loss_tfa,
        loss: combined_objective(lc.value, loss_tfa, loss.alpha),
        directed: Some(directed),
    })
}

/// Accumulates batch losses in a fixed order.
#[derive(Default)]
struct EpochAccumulator {
    n: usize,
    c: f64,
    tfa: f64,
    total: f64,
    ab: f64,
    ba: f64,
    directed: bool,
}

impl EpochAccumulator {
    fn add(&mut self, b: &BatchLoss) {
        self.n += 1;
        self.c += b.loss_c;
        self.tfa += b.loss_tfa;
        self.total += b.loss;
        if let Some((ab, ba)) = b.directed {
            self.directed = true;
            self.ab += ab;
            self.ba += ba;
        }
    }

    fn finish(&self, epoch: usize) -> EpochLoss {
        let k = self.n as f64;
        EpochLoss {
            epoch,
            loss_c: self.c / k,
            loss_tfa: self.tfa / k,
            loss: self.total / k,
            directed: self.directed.then(|| (self.ab / k, self.ba / k)),
        }
    }
}

fn check_batch(batch_size: usize, n: usize) -> Result<()> {
    if batch_size > n {
        return Err(Error::InvalidArgument(format!(
            "batch_size {batch_size} exceeds the {n} training windows"
        )));
    }
    Ok(())
}

fn stream_config(cfg: &EncoderConfig, windows: &[TimeWindow]) -> Result<EncoderConfig> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InvalidArgument("the training split is empty".into()))?;
    Ok(EncoderConfig {
        in_channels: first.channels(),
        ..cfg.clone()
    })
}

/// Two-view contrastive pretraining of one encoder, with the alignment
/// loss between the unpooled features of the two views. Only the
/// label-free train split is read. Trailing partial batches are dropped.
pub fn pretrain_unimodal(ds: &WindowedDataset, cfg: &PretrainConfig) -> Result<(ContrastiveModel, PretrainReport)> {
    cfg.validate(PretrainMode::Unimodal)?;
    let train = ds.unlabeled_train();
    check_batch(cfg.batch_size, train.len())?;
    let mut model = ContrastiveModel::unimodal(&stream_config(&cfg.encoder, &train)?, cfg.seed)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut report = PretrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        seed: cfg.seed,
    };
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let order = RngState::derive(cfg.seed, &[KEY_SHUFFLE, epoch as u64]).permutation(train.len());
        let mut acc = EpochAccumulator::default();
        for (b, batch) in order.chunks_exact(cfg.batch_size).enumerate() {
            let mut rng = RngState::derive(cfg.seed, &[KEY_AUGMENT, epoch as u64, b as u64]);
            let mut views = Vec::with_capacity(2 * batch.len());
            for &i in batch {
                let (v1, v2) = make_views(&train[i], &cfg.augment_a, &mut rng)?;
                views.push(v1.values);
                views.push(v2.values);
            }
            model.params.zero_grads();
            let bl = unimodal_step_loss(&model.streams[0], &mut model.params, &views, &cfg.loss, true)?;
            if !bl.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss in epoch {epoch}, batch {b}")));
            }
            step += 1;
            adam_step(&mut model.params, &adam, step)?;
            acc.add(&bl);
        }
        report.epochs.push(acc.finish(epoch));
    }
    Ok((model, report))
}

/// Two-stream contrastive pretraining with the alignment loss between the
/// streams' unpooled features. Window `j` of each dataset must be the same
/// instance; the streams may differ in length and channel count.
pub fn pretrain_multimodal(
    ds_a: &WindowedDataset,
    ds_b: &WindowedDataset,
    cfg: &PretrainConfig,
) -> Result<(ContrastiveModel, PretrainReport)> {
    cfg.validate(PretrainMode::Multimodal)?;
    if ds_a.len() != ds_b.len() || ds_a.splits != ds_b.splits {
        return Err(Error::Shape(format!(
            "streams are not index-aligned ({} and {} windows)",
            ds_a.len(),
            ds_b.len()
        )));
    }
    let train_a = ds_a.unlabeled_train();
    let train_b = ds_b.unlabeled_train();
    check_batch(cfg.batch_size, train_a.len())?;
    let mut model = ContrastiveModel::multimodal(
        &stream_config(&cfg.encoder, &train_a)?,
        &stream_config(&cfg.encoder, &train_b)?,
        cfg.seed,
    )?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut report = PretrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        seed: cfg.seed,
    };
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let order = RngState::derive(cfg.seed, &[KEY_SHUFFLE, epoch as u64]).permutation(train_a.len());
        let mut acc = EpochAccumulator::default();
        for (b, batch) in order.chunks_exact(cfg.batch_size).enumerate() {
            let mut rng_a = RngState::derive(cfg.seed, &[KEY_AUGMENT, epoch as u64, b as u64, 0]);
            let mut rng_b = RngState::derive(cfg.seed, &[KEY_AUGMENT, epoch as u64, b as u64, 1]);
            let mut va = Vec::with_capacity(batch.len());
            let mut vb = Vec::with_capacity(batch.len());
            for &i in batch {
                va.push(augment_or_identity(&train_a[i], &cfg.augment_a, &mut rng_a)?.values);
                vb.push(augment_or_identity(&train_b[i], &cfg.augment_b, &mut rng_b)?.values);
            }
            model.params.zero_grads();
            let (sa, sb) = (&model.streams[0], &model.streams[1]);
            let bl = multimodal_step_loss(sa, sb, &mut model.params, &va, &vb, &cfg.loss, true)?;
            if !bl.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss in epoch {epoch}, batch {b}")));
            }
            step += 1;
            adam_step(&mut model.params, &adam, step)?;
            acc.add(&bl);
        }
        report.epochs.push(acc.finish(epoch));
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, generate_synthetic_pair, SyntheticSpec};
    use crate::nn::encode_checkpoint;

    fn tiny_cfg() -> PretrainConfig {
        PretrainConfig {
            epochs: 2,
            batch_size: 4,
            encoder: EncoderConfig {
                hidden: 4,
                layers: 2,
                kernel: 3,
                proj_dim: 4,
                ..EncoderConfig::new(1)
            },
            seed: 5,
            ..PretrainConfig::default()
        }
    }

    fn tiny_data() -> WindowedDataset {
        generate_synthetic(&SyntheticSpec::new(2, 10, 12, 3, 1)).unwrap()
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let ds = tiny_data();
        let (a, ra) = pretrain_unimodal(&ds, &tiny_cfg()).unwrap();
        let (b, rb) = pretrain_unimodal(&ds, &tiny_cfg()).unwrap();
        assert_eq!(encode_checkpoint(&a.params), encode_checkpoint(&b.params));
        assert_eq!(ra.to_csv(), rb.to_csv());
    }

    #[test]
    fn alpha_zero_matches_disabled_branch() {
        let ds = tiny_data();
        let mut zero = tiny_cfg();
        zero.loss.alpha = 0.0;
        let mut off = tiny_cfg();
        off.loss.tfa_enabled = false;
        let (_, rz) = pretrain_unimodal(&ds, &zero).unwrap();
        let (_, ro) = pretrain_unimodal(&ds, &off).unwrap();
        assert_eq!(rz.to_csv(), ro.to_csv());
        for e in &rz.epochs {
            assert_eq!(e.loss.to_bits(), e.loss_c.to_bits());
        }
    }

    #[test]
    fn branch_gradients_add() {
        let ds = tiny_data();
        let cfg = tiny_cfg();
        let model = ContrastiveModel::unimodal(
            &EncoderConfig {
                in_channels: 3,
                ..cfg.encoder.clone()
            },
            3,
        )
        .unwrap();
        let views: Vec<Array2<f64>> = ds.windows[..4].iter().map(|w| w.values.clone()).collect();
        let grads = |settings: LossSettings| {
            let mut p = model.params.clone();
            p.zero_grads();
            unimodal_step_loss(&model.streams[0], &mut p, &views, &settings, true).unwrap();
            p.names()
                .flat_map(|n| p.get(n).unwrap().grad.clone())
                .collect::<Vec<f64>>()
        };
        let both = grads(LossSettings::default());
        let contrastive = grads(LossSettings {
            tfa_enabled: false,
            ..LossSettings::default()
        });
        // Alignment branch alone, backpropagated through the encoder only.
        let stream = &model.streams[0];
        let mut p = model.params.clone();
        p.zero_grads();
        let fwd: Vec<_> = views
            .iter()
            .map(|v| stream.encoder.forward(&p, v.view(), Mode::Train, None).unwrap())
            .collect();
        let pairs: Vec<_> = fwd.chunks_exact(2).map(|f| (f[0].0.view(), f[1].0.view())).collect();
        let tfa = tfa_batch_loss(&pairs, 0.1).unwrap();
        for (r, (_, tape)) in fwd.iter().enumerate() {
            let (ga, gb) = &tfa.feature_grads[r / 2];
            let g = if r % 2 == 0 { ga } else { gb };
            stream.encoder.backward(&mut p, tape, g.view()).unwrap();
        }
        let alignment: Vec<f64> = p.names().flat_map(|n| p.get(n).unwrap().grad.clone()).collect();
        for ((b, c), a) in both.iter().zip(&contrastive).zip(&alignment) {
            let expected = c + 0.1 * a;
            assert!(
                (b - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
                "{b} vs {expected}"
            );
        }
        assert!(alignment.iter().any(|&a| a != 0.0));
    }

    #[test]
    fn zero_weight_alignment_leaves_gradients_bit_identical() {
        let ds = tiny_data();
        let cfg = tiny_cfg();
        let model = ContrastiveModel::unimodal(
            &EncoderConfig {
                in_channels: 3,
                ..cfg.encoder.clone()
            },
            3,
        )
        .unwrap();
        let views: Vec<Array2<f64>> = ds.windows[..4].iter().map(|w| w.values.clone()).collect();
        let run = |settings: LossSettings| {
            let mut p = model.params.clone();
            p.zero_grads();
            let l = unimodal_step_loss(&model.streams[0], &mut p, &views, &settings, true).unwrap();
            (l.loss.to_bits(), encode_grads(&p))
        };
        let zero = run(LossSettings {
            alpha: 0.0,
            ..LossSettings::default()
        });
        let off = run(LossSettings {
            tfa_enabled: false,
            ..LossSettings::default()
        });
        assert_eq!(zero, off);
    }

    fn encode_grads(p: &ModelParams) -> Vec<u64> {
        p.names()
            .flat_map(|n| p.get(n).unwrap().grad.iter().map(|g| g.to_bits()).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn symmetric_streams_have_equal_directed_losses() {
        let ds = tiny_data();
        let mut cfg = tiny_cfg();
        cfg.mode = PretrainMode::Multimodal;
        cfg.augment_a.clear();
        cfg.augment_b.clear();
        let (_, report) = pretrain_multimodal(&ds, &ds, &cfg).unwrap();
        for e in &report.epochs {
            let (ab, ba) = e.directed.unwrap();
            assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0), "{ab} vs {ba}");
        }
    }

    #[test]
    fn unequal_stream_lengths_train() {
        let (a, b) = generate_synthetic_pair(&SyntheticSpec::new(2, 10, 20, 3, 2), 12, 4).unwrap();
        let mut cfg = tiny_cfg();
        cfg.mode = PretrainMode::Multimodal;
        let (model, report) = pretrain_multimodal(&a, &b, &cfg).unwrap();
        assert_eq!(report.epochs.len(), 2);
        assert!(report.epochs.iter().all(|e| e.loss_tfa > 0.0));
        assert!(model.params.get("b.enc.0.weight").is_some());
        assert!(report
            .to_csv()
            .starts_with("epoch,loss_c,loss_tfa,loss,loss_a_to_b,loss_b_to_a\n"));
    }

    #[test]
    fn batch_larger_than_train_split_is_error() {
        let mut cfg = tiny_cfg();
        cfg.batch_size = 1000;
        assert!(pretrain_unimodal(&tiny_data(), &cfg).is_err());
    }

    #[test]
    fn wrong_mode_is_error() {
        let mut cfg = tiny_cfg();
        cfg.mode = PretrainMode::Multimodal;
        assert!(pretrain_unimodal(&tiny_data(), &cfg).is_err());
    }

    #[test]
    fn misaligned_streams_rejected() {
        let a = tiny_data();
        let b = generate_synthetic(&SyntheticSpec::new(2, 12, 12, 3, 1)).unwrap();
        let mut cfg = tiny_cfg();
        cfg.mode = PretrainMode::Multimodal;
        assert!(pretrain_multimodal(&a, &b, &cfg).is_err());
    }
}
