use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::RngState;

use super::layers::{LayerSpec, Mode, Network, Padding, Tape};
use super::params::ModelParams;

/// Hidden widths of the MLP classifier.
pub const MLP_HIDDEN: (usize, usize) = (256, 128);
pub const MLP_DROPOUT: f64 = 0.2;
/// Per-stream width after the fusion layer.
pub const FUSION_WIDTH: usize = 128;

/// Shape of a conv encoder and its projection head.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub hidden: usize,
    pub layers: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub proj_dim: usize,
}

impl EncoderConfig {
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            hidden: 32,
            layers: 3,
            kernel: 5,
            stride: 1,
            padding: Padding::Same,
            proj_dim: 32,
        }
    }

    /// `layers` × (conv1d + relu). No temporal pooling.
    pub fn encoder(&self, name: &str) -> Result<Network> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument("encoder needs at least one layer".into()));
        }
        let mut specs = Vec::with_capacity(2 * self.layers);
        for i in 0..self.layers {
            specs.push(LayerSpec::Conv1d {
                in_channels: if i == 0 { self.in_channels } else { self.hidden },
                out_channels: self.hidden,
                kernel: self.kernel,
                stride: self.stride,
                padding: self.padding,
            });
            specs.push(LayerSpec::Relu);
        }
        Network::new(name, specs)
    }

    /// Mean-pool over time, then `H → H → d` with a relu between.
    pub fn projection(&self, name: &str) -> Result<Network> {
        Network::new(
            name,
            vec![
                LayerSpec::MeanPoolTime,
                LayerSpec::Affine {
                    inputs: self.hidden,
                    outputs: self.hidden,
                },
                LayerSpec::Relu,
                LayerSpec::Affine {
                    inputs: self.hidden,
                    outputs: self.proj_dim,
                },
            ],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierArch {
    Linear,
    Mlp,
}

impl ClassifierArch {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierArch::Linear => "linear",
            ClassifierArch::Mlp => "mlp",
        }
    }

    /// Classifier over rows of `inputs` features.
    pub fn network(self, name: &str, inputs: usize, classes: usize, dropout: f64) -> Result<Network> {
        let specs = match self {
            ClassifierArch::Linear => vec![LayerSpec::Affine {
                inputs,
                outputs: classes,
            }],
            ClassifierArch::Mlp => {
                let (h1, h2) = MLP_HIDDEN;
                vec![
                    LayerSpec::Affine { inputs, outputs: h1 },
                    LayerSpec::Relu,
                    LayerSpec::Dropout { rate: dropout },
                    LayerSpec::Affine {
                        inputs: h1,
                        outputs: h2,
                    },
                    LayerSpec::Relu,
                    LayerSpec::Dropout { rate: dropout },
                    LayerSpec::Affine {
                        inputs: h2,
                        outputs: classes,
                    },
                ]
            }
        };
        Network::new(name, specs)
    }
}

impl fmt::Display for ClassifierArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ClassifierArch::Linear),
            "mlp" => Ok(ClassifierArch::Mlp),
            other => Err(Error::InvalidArgument(format!(
                "unknown classifier `{other}`, expected linear or mlp"
            ))),
        }
    }
}

/// Two-stream head: each stream goes through affine(128) + batch norm +
/// relu, the results are concatenated and classified linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionHead {
    pub stream_a: Network,
    pub stream_b: Network,
    pub classifier: Network,
}

/// Tapes of one fusion forward pass.
#[derive(Clone, Debug)]
pub struct FusionTape {
    a: Tape,
    b: Tape,
    head: Tape,
}

impl FusionHead {
    pub fn new(name: &str, features_a: usize, features_b: usize, classes: usize) -> Result<Self> {
        let fusion = |suffix: &str, inputs: usize| {
            Network::new(
                &format!("{name}.{suffix}"),
                vec![
                    LayerSpec::Affine {
                        inputs,
                        outputs: FUSION_WIDTH,
                    },
                    LayerSpec::BatchNorm {
                        features: FUSION_WIDTH,
                        momentum: 0.9,
                    },
                    LayerSpec::Relu,
                ],
            )
        };
        Ok(Self {
            stream_a: fusion("a", features_a)?,
            stream_b: fusion("b", features_b)?,
            classifier: ClassifierArch::Linear.network(&format!("{name}.out"), 2 * FUSION_WIDTH, classes, 0.0)?,
        })
    }

    pub fn networks(&self) -> [&Network; 3] {
        [&self.stream_a, &self.stream_b, &self.classifier]
    }

    pub fn forward(
        &self,
        params: &ModelParams,
        features_a: ArrayView2<'_, f64>,
        features_b: ArrayView2<'_, f64>,
        mode: Mode,
        mut rng: Option<&mut RngState>,
    ) -> Result<(Array2<f64>, FusionTape)> {
        if features_a.nrows() != features_b.nrows() {
            return Err(Error::Shape(format!(
                "fusion streams have {} and {} rows",
                features_a.nrows(),
                features_b.nrows()
            )));
        }
        let (ha, a) = self.stream_a.forward(params, features_a, mode, rng.as_deref_mut())?;
        let (hb, b) = self.stream_b.forward(params, features_b, mode, rng.as_deref_mut())?;
        let joined = concatenate(Axis(1), &[ha.view(), hb.view()]).map_err(|e| Error::Shape(e.to_string()))?;
        let (logits, head) = self.classifier.forward(params, joined.view(), mode, rng)?;
        Ok((logits, FusionTape { a, b, head }))
    }

    pub fn backward(
        &self,
        params: &mut ModelParams,
        tape: &FusionTape,
        grad_logits: ArrayView2<'_, f64>,
    ) -> Result<()> {
        let g = self.classifier.backward(params, &tape.head, grad_logits)?;
        self.stream_a
            .backward(params, &tape.a, g.slice(s![.., ..FUSION_WIDTH]))?;
        self.stream_b
            .backward(params, &tape.b, g.slice(s![.., FUSION_WIDTH..]))?;
        Ok(())
    }

    pub fn update_running_stats(&self, params: &mut ModelParams, tape: &FusionTape) -> Result<()> {
        self.stream_a.update_running_stats(params, &tape.a)?;
        self.stream_b.update_running_stats(params, &tape.b)
    }
}
