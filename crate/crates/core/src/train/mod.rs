//! Pretraining loops, frozen-encoder fine-tuning, metrics, the
//! semi-supervised protocol and alignment analysis.

mod align;
mod finetune;
mod metrics;
mod pretrain;
mod semisup;

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::TimeWindow;
use crate::error::{Error, Result};
use crate::nn::{init_params, EncoderConfig, ModelParams, Network};

pub use align::{
    alignment_between, alignment_heatmap, path_mean_distance, sample_triplets, triplet_alignment_check,
    write_alignment, Alignment, PositiveKind, Triplet, TripletReport,
};
pub use finetune::{
    evaluate_classifier, extract_features, finetune, finetune_multimodal, fit_classifier, Classifier, ClassifierHead,
    FinetuneConfig, LabeledFeatures, Pooling,
};
pub use metrics::{evaluate_macro_f1, ClassMetrics, MetricsReport};
pub use pretrain::{
    default_pipeline, multimodal_step_loss, pretrain_multimodal, pretrain_unimodal, unimodal_step_loss, BatchLoss,
    EpochLoss, LossSettings, PretrainConfig, PretrainMode, PretrainReport,
};
pub use semisup::{confidence_interval, semi_supervised_protocol, semisup_csv, SemisupRow};

/// Encoder and projection head of one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub encoder: Network,
    pub projection: Network,
}

impl Stream {
    fn build(prefix: &str, cfg: &EncoderConfig) -> Result<Self> {
        Ok(Self {
            encoder: cfg.encoder(&format!("{prefix}enc"))?,
            projection: cfg.projection(&format!("{prefix}proj"))?,
        })
    }
}

/// One or two streams with their shared parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveModel {
    pub streams: Vec<Stream>,
    pub params: ModelParams,
}

impl ContrastiveModel {
    /// Parameters `enc.*` and `proj.*`.
    pub fn unimodal(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        let stream = Stream::build("", cfg)?;
        let params = init_params(&[&stream.encoder, &stream.projection], seed)?;
        Ok(Self {
            streams: vec![stream],
            params,
        })
    }

    /// Parameters `a.enc.*`, `a.proj.*`, `b.enc.*`, `b.proj.*`. Each stream
    /// draws its initial weights from the same generator state, so streams
    /// of equal shape start identical.
    pub fn multimodal(cfg_a: &EncoderConfig, cfg_b: &EncoderConfig, seed: u64) -> Result<Self> {
        let a = Stream::build("a.", cfg_a)?;
        let b = Stream::build("b.", cfg_b)?;
        let mut params = init_params(&[&a.encoder, &a.projection], seed)?;
        params.merge(init_params(&[&b.encoder, &b.projection], seed)?)?;
        Ok(Self {
            streams: vec![a, b],
            params,
        })
    }

    pub fn frozen_encoder(&self, stream: usize) -> Result<FrozenEncoder> {
        let s = self
            .streams
            .get(stream)
            .ok_or_else(|| Error::InvalidArgument(format!("model has no stream {stream}")))?;
        Ok(FrozenEncoder {
            params: self.params.subset(&format!("{}.", s.encoder.name())),
            network: s.encoder.clone(),
        })
    }
}

/// A read-only encoder snapshot used for feature extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenEncoder {
    pub network: Network,
    pub params: ModelParams,
}

impl FrozenEncoder {
    /// `T' × H` feature sequence of one window.
    pub fn encode(&self, values: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.network.infer(&self.params, values)
    }

    /// One pooled feature row per window.
    pub fn features<'a>(
        &self,
        windows: impl IntoIterator<Item = &'a TimeWindow>,
        pooling: Pooling,
    ) -> Result<Array2<f64>> {
        let rows = windows
            .into_iter()
            .map(|w| {
                let h = self.encode(w.values.view())?;
                Ok(match pooling {
                    Pooling::Mean => h.mean_axis(Axis(0)).expect("non-empty sequence"),
                    Pooling::Flatten => h.iter().copied().collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let width = rows.first().map_or(0, |r| r.len());
        let mut out = Array2::zeros((rows.len(), width));
        for (mut dst, src) in out.rows_mut().into_iter().zip(&rows) {
            dst.assign(src);
        }
        Ok(out)
    }
}
