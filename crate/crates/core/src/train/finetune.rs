use ndarray::{Array2, ArrayView2, Axis};

use crate::data::{Split, WindowedDataset, STD_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, init_params, AdamConfig, ClassifierArch, FusionHead, Mode, ModelParams, Network, Tensor, MLP_DROPOUT,
};
use crate::rng::RngState;

use super::metrics::{evaluate_macro_f1, MetricsReport};
use super::FrozenEncoder;

const KEY_SHUFFLE: u64 = 0xf5;
const KEY_DROPOUT: u64 = 0xd0;

/// How a `T' × H` feature sequence becomes one feature row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    /// Row-major flattening to `T'·H` values.
    Flatten,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub arch: ClassifierArch,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub pooling: Pooling,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            arch: ClassifierArch::Linear,
            epochs: 100,
            lr: 1e-3,
            batch_size: 32,
            dropout: MLP_DROPOUT,
            pooling: Pooling::Mean,
            seed: 0,
        }
    }
}

/// Pooled features of one or two streams with their labels; row `i` of
/// every stream belongs to the same instance.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    pub streams: Vec<Array2<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows at `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            streams: self.streams.iter().map(|x| x.select(Axis(0), rows)).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

/// Encodes windows `indices` of each dataset with the matching encoder.
/// Labels come from the first dataset and must be present.
pub fn extract_features(
    encoders: &[&FrozenEncoder],
    datasets: &[&WindowedDataset],
    indices: &[usize],
    pooling: Pooling,
) -> Result<LabeledFeatures> {
    if encoders.is_empty() || encoders.len() != datasets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} encoders for {} datasets",
            encoders.len(),
            datasets.len()
        )));
    }
    let labels = indices
        .iter()
        .map(|&i| {
            datasets[0].windows[i]
                .label
                .ok_or_else(|| Error::InvalidArgument(format!("window {i} has no label; fine-tuning needs labels")))
        })
        .collect::<Result<Vec<_>>>()?;
    let streams = encoders
        .iter()
        .zip(datasets)
        .map(|(enc, ds)| enc.features(indices.iter().map(|&i| &ds.windows[i]), pooling))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledFeatures { streams, labels })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClassifierHead {
    Single(Network),
    Fusion(FusionHead),
}

/// A trained classifier over standardised pooled features. The per-stream
/// standardisation statistics are stored as non-trainable parameters
/// `scale.<stream>.mean` and `scale.<stream>.std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub arch: ClassifierArch,
    pub head: ClassifierHead,
    pub params: ModelParams,
    pub num_classes: usize,
    pub widths: Vec<usize>,
}

impl Classifier {
    /// One width builds a single-stream classifier of `arch`; two widths
    /// build the fusion head (whose final layer is linear).
    pub fn new(arch: ClassifierArch, widths: &[usize], num_classes: usize, dropout: f64, seed: u64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("a classifier needs at least 2 classes".into()));
        }
        let (head, mut params) = match *widths {
            [w] => {
                let net = arch.network("cls", w, num_classes, dropout)?;
                let params = init_params(&[&net], seed)?;
                (ClassifierHead::Single(net), params)
            }
            [wa, wb] => {
                let fusion = FusionHead::new("fuse", wa, wb, num_classes)?;
                let params = init_params(&fusion.networks(), seed)?;
                (ClassifierHead::Fusion(fusion), params)
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "classifier supports 1 or 2 streams, got {}",
                    widths.len()
                )))
            }
        };
        for (s, &w) in widths.iter().enumerate() {
            let mut std = Tensor::zeros(&[w]);
            std.value.fill(1.0);
            params.insert(&format!("scale.{s}.mean"), Tensor::zeros(&[w]), false)?;
            params.insert(&format!("scale.{s}.std"), std, false)?;
        }
        Ok(Self {
            arch,
            head,
            params,
            num_classes,
            widths: widths.to_vec(),
        })
    }

    fn fit_scaler(&mut self, streams: &[Array2<f64>]) {
        for (s, x) in streams.iter().enumerate() {
            let n = x.nrows() as f64;
            let mean = x.mean_axis(Axis(0)).expect("non-empty");
            let std: Vec<f64> = x
                .columns()
                .into_iter()
                .zip(&mean)
                .map(|(c, m)| {
                    (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
                        .sqrt()
                        .max(STD_FLOOR)
                })
                .collect();
            self.params.get_mut(&format!("scale.{s}.mean")).expect("created").value = mean.to_vec();
            self.params.get_mut(&format!("scale.{s}.std")).expect("created").value = std;
        }
    }

    fn standardize(&self, streams: &[ArrayView2<'_, f64>]) -> Result<Vec<Array2<f64>>> {
        if streams.len() != self.widths.len() {
            return Err(Error::Shape(format!(
                "classifier expects {} streams, got {}",
                self.widths.len(),
                streams.len()
            )));
        }
        streams
            .iter()
            .enumerate()
            .map(|(s, x)| {
                if x.ncols() != self.widths[s] {
                    return Err(Error::Shape(format!(
                        "stream {s} has {} features, classifier expects {}",
                        x.ncols(),
                        self.widths[s]
                    )));
                }
                let mean = &self.params.get(&format!("scale.{s}.mean")).expect("created").value;
                let std = &self.params.get(&format!("scale.{s}.std")).expect("created").value;
                Ok(Array2::from_shape_fn(x.raw_dim(), |(r, c)| {
                    (x[[r, c]] - mean[c]) / std[c]
                }))
            })
            .collect()
    }

    /// Logits for standardised inputs.
    fn logits(&self, xs: &[Array2<f64>]) -> Result<Array2<f64>> {
        match &self.head {
            ClassifierHead::Single(net) => net.infer(&self.params, xs[0].view()),
            ClassifierHead::Fusion(f) => Ok(f.forward(&self.params, xs[0].view(), xs[1].view(), Mode::Eval, None)?.0),
        }
    }

    /// Arg-max class per row (ties go to the lower class id).
    pub fn predict(&self, streams: &[ArrayView2<'_, f64>]) -> Result<Vec<usize>> {
        let logits = self.logits(&self.standardize(streams)?)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (c, &v)| if v > best.1 { (c, v) } else { best },
                    )
                    .0
            })
            .collect())
    }

    /// One training step on standardised rows; returns the mean
    /// cross-entropy. Gradients are zeroed first.
    fn train_step(&mut self, xs: &[Array2<f64>], labels: &[usize], rng: &mut RngState) -> Result<f64> {
        self.params.zero_grads();
        match &self.head {
            ClassifierHead::Single(net) => {
                let (logits, tape) = net.forward(&self.params, xs[0].view(), Mode::Train, Some(rng))?;
                let (loss, grad) = softmax_cross_entropy(&logits, labels);
                net.backward(&mut self.params, &tape, grad.view())?;
                Ok(loss)
            }
            ClassifierHead::Fusion(f) => {
                let (logits, tape) = f.forward(&self.params, xs[0].view(), xs[1].view(), Mode::Train, Some(rng))?;
                let (loss, grad) = softmax_cross_entropy(&logits, labels);
                f.backward(&mut self.params, &tape, grad.view())?;
                f.update_running_stats(&mut self.params, &tape)?;
                Ok(loss)
            }
        }
    }
}

/// Mean cross-entropy of softmax(logits) and its gradient.
fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (r, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        for (c, &v) in row.iter().enumerate() {
            grad[[r, c]] = (v - lse).exp() / n;
        }
        grad[[r, y]] -= 1.0 / n;
    }
    (loss / n, grad)
}

/// Trains a classifier on `train` with Adam and per-epoch shuffling.
/// Returns the classifier and the mean training loss of every epoch.
pub fn fit_classifier(
    train: &LabeledFeatures,
    num_classes: usize,
    cfg: &FinetuneConfig,
) -> Result<(Classifier, Vec<f64>)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("no labelled training windows".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(
            "fine-tuning needs batch_size >= 1 and lr > 0".into(),
        ));
    }
    if let Some(&l) = train.labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {l} outside [0, {num_classes})")));
    }
    let widths: Vec<usize> = train.streams.iter().map(|x| x.ncols()).collect();
    let mut clf = Classifier::new(cfg.arch, &widths, num_classes, cfg.dropout, cfg.seed)?;
    let fusion = matches!(clf.head, ClassifierHead::Fusion(_));
    if fusion && train.len() < 2 {
        return Err(Error::InvalidArgument(
            "the fusion head needs at least 2 training windows".into(),
        ));
    }
    clf.fit_scaler(&train.streams);
    let views: Vec<ArrayView2<'_, f64>> = train.streams.iter().map(|x| x.view()).collect();
    let xs = clf.standardize(&views)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let order = RngState::derive(cfg.seed, &[KEY_SHUFFLE, epoch as u64]).permutation(train.len());
        let mut rng = RngState::derive(cfg.seed, &[KEY_DROPOUT, epoch as u64]);
        let (mut total, mut batches) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size.min(train.len())) {
            // Batch statistics are undefined for a single row.
            if fusion && batch.len() < 2 {
                continue;
            }
            let bx: Vec<Array2<f64>> = xs.iter().map(|x| x.select(Axis(0), batch)).collect();
            let by: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            total += clf.train_step(&bx, &by, &mut rng)?;
            batches += 1;
            step += 1;
            adam_step(&mut clf.params, &adam, step)?;
        }
        losses.push(total / batches as f64);
    }
    Ok((clf, losses))
}

pub fn evaluate_classifier(clf: &Classifier, test: &LabeledFeatures) -> Result<MetricsReport> {
    let views: Vec<ArrayView2<'_, f64>> = test.streams.iter().map(|x| x.view()).collect();
    let pred = clf.predict(&views)?;
    evaluate_macro_f1(&test.labels, &pred, clf.num_classes)
}

fn run(
    encoders: &[&FrozenEncoder],
    datasets: &[&WindowedDataset],
    cfg: &FinetuneConfig,
) -> Result<(Classifier, MetricsReport)> {
    let ds = datasets[0];
    if !ds.is_labeled() {
        return Err(Error::InvalidArgument("fine-tuning needs a labelled dataset".into()));
    }
    let train = extract_features(encoders, datasets, &ds.indices(Split::Train), cfg.pooling)?;
    let test = extract_features(encoders, datasets, &ds.indices(Split::Test), cfg.pooling)?;
    let (clf, losses) = fit_classifier(&train, ds.num_classes, cfg)?;
    let mut report = evaluate_classifier(&clf, &test)?;
    report.train_loss = losses;
    report.seed = cfg.seed;
    Ok((clf, report))
}

/// Trains a classifier on frozen pooled features of the train split and
/// reports test metrics. The encoder is only read.
pub fn finetune(
    encoder: &FrozenEncoder,
    ds: &WindowedDataset,
    cfg: &FinetuneConfig,
) -> Result<(Classifier, MetricsReport)> {
    run(&[encoder], &[ds], cfg)
}

/// Two-stream variant: each stream's pooled features pass through its own
/// fusion layer (affine to 128, batch norm, relu) before a joint linear
/// classifier.
pub fn finetune_multimodal(
    encoder_a: &FrozenEncoder,
    encoder_b: &FrozenEncoder,
    ds_a: &WindowedDataset,
    ds_b: &WindowedDataset,
    cfg: &FinetuneConfig,
) -> Result<(Classifier, MetricsReport)> {
    if ds_a.len() != ds_b.len() || ds_a.splits != ds_b.splits {
        return Err(Error::Shape("streams are not index-aligned".into()));
    }
    run(&[encoder_a, encoder_b], &[ds_a, ds_b], cfg)
}
