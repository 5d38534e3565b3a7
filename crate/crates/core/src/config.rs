//! Line-oriented `key = value` run configuration.
//!
//! Every key has a type and most have a default. Augmentation pipelines are
//! ordered lists declared as `aug.N.kind`, `aug.N.prob` and `aug.N.<param>`
//! for the first stream and `augb.N.*` for the second.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::augment::{AugmentationKind, AugmentationSpec};
use crate::contrastive::DeltaForm;
use crate::data::{CsvSchema, LabelColumn, SubsetMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::nn::{ClassifierArch, EncoderConfig, Padding};
use crate::train::{default_pipeline, FinetuneConfig, LossSettings, Pooling, PretrainConfig, PretrainMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueKind {
    Int,
    Float,
    Bool,
    Str,
    Choice(&'static [&'static str]),
    /// Comma-separated subset sizes: integers are per-class counts, values
    /// with a decimal point are fractions of the training split.
    Grid,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::Int => f.write_str("non-negative integer"),
            ValueKind::Float => f.write_str("finite number"),
            ValueKind::Bool => f.write_str("true or false"),
            ValueKind::Str => f.write_str("non-empty string"),
            ValueKind::Choice(options) => write!(f, "one of {}", options.join(", ")),
            ValueKind::Grid => f.write_str("comma-separated list of counts or fractions"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Bool(bool),
    Str(String),
    Grid(Vec<SubsetMode>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => f.write_str(v),
            Value::Grid(g) => {
                let parts: Vec<String> = g
                    .iter()
                    .map(|m| match m {
                        SubsetMode::PerClass(k) => k.to_string(),
                        SubsetMode::Fraction(p) => format!("{p:?}"),
                    })
                    .collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

struct KeySpec {
    key: &'static str,
    kind: ValueKind,
    default: Option<&'static str>,
}

const fn key(key: &'static str, kind: ValueKind, default: &'static str) -> KeySpec {
    KeySpec {
        key,
        kind,
        default: Some(default),
    }
}

const fn optional(key: &'static str, kind: ValueKind) -> KeySpec {
    KeySpec {
        key,
        kind,
        default: None,
    }
}

const AUG_KINDS: &[&str] = &["jitter", "scale", "rotate", "permute", "shift", "resized_crop", "shear"];

const SCHEMA: &[KeySpec] = &[
    key("seed", ValueKind::Int, "0"),
    key("data.source", ValueKind::Choice(&["synth", "csv"]), "synth"),
    optional("data.manifest", ValueKind::Str),
    optional("data.manifest_b", ValueKind::Str),
    optional("data.label_column", ValueKind::Str),
    key("data.window", ValueKind::Int, "128"),
    key("data.overlap", ValueKind::Float, "0.5"),
    key("data.sample_rate", ValueKind::Float, "30.0"),
    key("data.num_classes", ValueKind::Int, "0"),
    key("data.normalize", ValueKind::Bool, "true"),
    key("synth.classes", ValueKind::Int, "4"),
    key("synth.per_class", ValueKind::Int, "500"),
    key("synth.length", ValueKind::Int, "50"),
    key("synth.channels", ValueKind::Int, "6"),
    key("synth.length_b", ValueKind::Int, "50"),
    key("synth.channels_b", ValueKind::Int, "6"),
    key("synth.noise", ValueKind::Float, "0.1"),
    key("synth.base_freq", ValueKind::Float, "0.04"),
    key("synth.harmonics", ValueKind::Int, "3"),
    key("model.hidden", ValueKind::Int, "32"),
    key("model.layers", ValueKind::Int, "3"),
    key("model.kernel", ValueKind::Int, "5"),
    key("model.stride", ValueKind::Int, "1"),
    key("model.padding", ValueKind::Choice(&["same", "valid"]), "same"),
    key("model.proj_dim", ValueKind::Int, "32"),
    key(
        "pretrain.mode",
        ValueKind::Choice(&["unimodal", "multimodal"]),
        "unimodal",
    ),
    key("pretrain.epochs", ValueKind::Int, "30"),
    key("pretrain.batch", ValueKind::Int, "32"),
    key("pretrain.lr", ValueKind::Float, "0.001"),
    key("loss.tau", ValueKind::Float, "0.1"),
    key("loss.gamma", ValueKind::Float, "0.1"),
    key("loss.alpha", ValueKind::Float, "0.1"),
    key("loss.tfa", ValueKind::Bool, "true"),
    key("loss.literal_delta", ValueKind::Bool, "false"),
    key("finetune.arch", ValueKind::Choice(&["linear", "mlp"]), "linear"),
    key("finetune.epochs", ValueKind::Int, "100"),
    key("finetune.lr", ValueKind::Float, "0.001"),
    key("finetune.batch", ValueKind::Int, "32"),
    key("finetune.dropout", ValueKind::Float, "0.2"),
    key("finetune.pooling", ValueKind::Choice(&["mean", "flatten"]), "mean"),
    key("semisup.grid", ValueKind::Grid, "1,5,25,100"),
    key("semisup.repeats", ValueKind::Int, "5"),
    key("align.first", ValueKind::Int, "0"),
    key("align.second", ValueKind::Int, "1"),
    key("align.gamma", ValueKind::Float, "0.1"),
    optional("io.checkpoint", ValueKind::Str),
    optional("io.classifier", ValueKind::Str),
    key("gradcheck.epsilon", ValueKind::Float, "0.0001"),
    key("gradcheck.model_epsilon", ValueKind::Float, "1e-5"),
    key("gradcheck.coords", ValueKind::Int, "40"),
    key("gradcheck.tolerance", ValueKind::Float, "0.001"),
];

/// An augmentation key split into its stream prefix, index and field.
fn aug_key(key: &str) -> Option<(&str, usize, &str)> {
    let mut parts = key.splitn(3, '.');
    let prefix = parts.next()?;
    if prefix != "aug" && prefix != "augb" {
        return None;
    }
    let index = parts.next()?.parse().ok()?;
    Some((prefix, index, parts.next()?))
}

fn kind_of(key: &str) -> Result<ValueKind> {
    if let Some(spec) = SCHEMA.iter().find(|s| s.key == key) {
        return Ok(spec.kind);
    }
    match aug_key(key) {
        Some((_, _, "kind")) => Ok(ValueKind::Choice(AUG_KINDS)),
        Some((_, _, field)) if !field.is_empty() => Ok(ValueKind::Float),
        _ => Err(Error::config(key, "unknown key")),
    }
}

fn coerce(key: &str, kind: ValueKind, raw: &str) -> Result<Value> {
    let mismatch = || Error::config(key, format!("expected {kind}, got `{raw}`"));
    match kind {
        ValueKind::Int => raw.parse().map(Value::Int).map_err(|_| mismatch()),
        ValueKind::Float => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::Float(v)),
            _ => Err(mismatch()),
        },
        ValueKind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(mismatch()),
        },
        ValueKind::Str if !raw.is_empty() => Ok(Value::Str(raw.to_string())),
        ValueKind::Str => Err(mismatch()),
        ValueKind::Choice(options) if options.contains(&raw) => Ok(Value::Str(raw.to_string())),
        ValueKind::Choice(_) => Err(mismatch()),
        ValueKind::Grid => raw
            .split(',')
            .map(|part| {
                let part = part.trim();
                if part.contains(['.', 'e', 'E']) {
                    match part.parse::<f64>() {
                        Ok(p) if p > 0.0 && p <= 1.0 => Ok(SubsetMode::Fraction(p)),
                        _ => Err(mismatch()),
                    }
                } else {
                    match part.parse::<usize>() {
                        Ok(k) if k > 0 => Ok(SubsetMode::PerClass(k)),
                        _ => Err(mismatch()),
                    }
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Value::Grid),
    }
}

/// Splits `key=value` as given to `--set`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(arg.trim(), "override must look like key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// The effective configuration of a run: every key with a default is
/// present, optional keys only when given.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = SCHEMA
            .iter()
            .filter_map(|s| {
                let raw = s.default?;
                Some((
                    s.key.to_string(),
                    coerce(s.key, s.kind, raw).expect("schema defaults are valid"),
                ))
            })
            .collect();
        Self { values }
    }
}

/// Reads a config file and applies `overrides` in order.
pub fn parse_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut cfg = RunConfig::parse_str(&text, path)?;
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

impl RunConfig {
    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    message: "expected `key = value`".into(),
                });
            };
            let k = k.trim();
            if let Some(first) = seen.insert(k.to_string(), i + 1) {
                return Err(Error::config(
                    k,
                    format!("duplicate key on lines {first} and {}", i + 1),
                ));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_overrides(overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_overrides(overrides)?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<()> {
        overrides.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = coerce(key, kind_of(key)?, raw)?;
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    /// Sorted `key = value` lines; parsing them back gives an equal config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn value(&self, key: &str) -> Result<&Value> {
        self.values
            .get(key)
            .ok_or_else(|| Error::config(key, "required key is missing"))
    }

    pub fn int(&self, key: &str) -> Result<u64> {
        match self.value(key)? {
            Value::Int(v) => Ok(*v),
            other => Err(Error::config(key, format!("expected an integer, holds `{other}`"))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        usize::try_from(self.int(key)?).map_err(|_| Error::config(key, "value does not fit in usize"))
    }

    pub fn float(&self, key: &str) -> Result<f64> {
        match self.value(key)? {
            Value::Float(v) => Ok(*v),
            other => Err(Error::config(key, format!("expected a number, holds `{other}`"))),
        }
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.value(key)? {
            Value::Bool(v) => Ok(*v),
            other => Err(Error::config(key, format!("expected a boolean, holds `{other}`"))),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        match self.value(key)? {
            Value::Str(v) => Ok(v),
            other => Err(Error::config(key, format!("expected a string, holds `{other}`"))),
        }
    }

    pub fn opt_str(&self, key: &str) -> Result<Option<&str>> {
        if self.values.contains_key(key) {
            self.str(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.int("seed")
    }

    pub fn grid(&self) -> Result<Vec<SubsetMode>> {
        match self.value("semisup.grid")? {
            Value::Grid(g) => Ok(g.clone()),
            other => Err(Error::config(
                "semisup.grid",
                format!("expected a grid, holds `{other}`"),
            )),
        }
    }

    pub fn mode(&self) -> Result<PretrainMode> {
        self.str("pretrain.mode")?
            .parse()
            .map_err(|e: Error| Error::config("pretrain.mode", e.to_string()))
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            noise_std: self.float("synth.noise")?,
            base_freq: self.float("synth.base_freq")?,
            harmonics: self.usize("synth.harmonics")?,
            ..SyntheticSpec::new(
                self.usize("synth.classes")?,
                self.usize("synth.per_class")?,
                self.usize("synth.length")?,
                self.usize("synth.channels")?,
                self.seed()?,
            )
        })
    }

    pub fn csv_schema(&self) -> Result<CsvSchema> {
        Ok(CsvSchema {
            label_column: match self.opt_str("data.label_column")? {
                Some(name) => LabelColumn::Required(name.to_string()),
                None => LabelColumn::Auto,
            },
            sample_rate_hz: self.float("data.sample_rate")?,
            ..CsvSchema::default()
        })
    }

    pub fn encoder_config(&self, in_channels: usize) -> Result<EncoderConfig> {
        Ok(EncoderConfig {
            in_channels,
            hidden: self.usize("model.hidden")?,
            layers: self.usize("model.layers")?,
            kernel: self.usize("model.kernel")?,
            stride: self.usize("model.stride")?,
            padding: match self.str("model.padding")? {
                "valid" => Padding::Valid,
                _ => Padding::Same,
            },
            proj_dim: self.usize("model.proj_dim")?,
        })
    }

    pub fn loss_settings(&self) -> Result<LossSettings> {
        Ok(LossSettings {
            tau: self.float("loss.tau")?,
            gamma: self.float("loss.gamma")?,
            alpha: self.float("loss.alpha")?,
            delta: if self.bool("loss.literal_delta")? {
                DeltaForm::Literal
            } else {
                DeltaForm::Scaled
            },
            tfa_enabled: self.bool("loss.tfa")?,
        })
    }

    /// The declared pipeline of stream `prefix` (`aug` or `augb`) in index
    /// order, or the default pipeline for `channels` when none is declared.
    pub fn pipeline(&self, prefix: &str, channels: usize) -> Result<Vec<AugmentationSpec>> {
        let mut by_index: BTreeMap<usize, Vec<(&str, &str, &Value)>> = BTreeMap::new();
        for (k, v) in &self.values {
            if let Some((p, index, field)) = aug_key(k) {
                if p == prefix {
                    by_index.entry(index).or_default().push((k, field, v));
                }
            }
        }
        if by_index.is_empty() {
            return Ok(default_pipeline(channels));
        }
        let mut out = Vec::with_capacity(by_index.len());
        for (index, fields) in by_index {
            let kind_key = format!("{prefix}.{index}.kind");
            let name = self.str(&kind_key)?;
            let mut kind =
                AugmentationKind::default_for(name).ok_or_else(|| Error::config(&kind_key, "unknown kind"))?;
            let mut probability = 0.75;
            for (k, field, v) in fields {
                let Value::Float(x) = v else { continue };
                if field == "prob" {
                    probability = *x;
                } else {
                    kind.set_param(field, *x).map_err(|e| Error::config(k, e.to_string()))?;
                }
            }
            let spec = AugmentationSpec { kind, probability };
            spec.validate().map_err(|e| Error::config(&kind_key, e.to_string()))?;
            out.push(spec);
        }
        Ok(out)
    }

    pub fn pretrain_config(&self, channels_a: usize, channels_b: usize) -> Result<PretrainConfig> {
        Ok(PretrainConfig {
            mode: self.mode()?,
            epochs: self.usize("pretrain.epochs")?,
            batch_size: self.usize("pretrain.batch")?,
            lr: self.float("pretrain.lr")?,
            loss: self.loss_settings()?,
            augment_a: self.pipeline("aug", channels_a)?,
            augment_b: self.pipeline("augb", channels_b)?,
            encoder: self.encoder_config(channels_a)?,
            seed: self.seed()?,
        })
    }

    pub fn finetune_config(&self) -> Result<FinetuneConfig> {
        Ok(FinetuneConfig {
            arch: self
                .str("finetune.arch")?
                .parse::<ClassifierArch>()
                .map_err(|e| Error::config("finetune.arch", e.to_string()))?,
            epochs: self.usize("finetune.epochs")?,
            lr: self.float("finetune.lr")?,
            batch_size: self.usize("finetune.batch")?,
            dropout: self.float("finetune.dropout")?,
            pooling: match self.str("finetune.pooling")? {
                "flatten" => Pooling::Flatten,
                _ => Pooling::Mean,
            },
            seed: self.seed()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse_str(text, Path::new("t.cfg"))
    }

    fn ov(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn reference_hyperparameters_parse() {
        let cfg = parse("loss.tau = 0.1\nloss.gamma = 0.1  # fixed\n").unwrap();
        let loss = cfg.loss_settings().unwrap();
        assert_eq!(loss.tau, 0.1);
        assert_eq!(loss.gamma, 0.1);
    }

    #[test]
    fn override_wins() {
        let mut cfg = parse("loss.alpha = 0.1\n").unwrap();
        cfg.apply_overrides(&[ov("loss.alpha", "0.3"), ov("loss.alpha", "0.005")])
            .unwrap();
        assert_eq!(cfg.float("loss.alpha").unwrap(), 0.005);
    }

    #[test]
    fn unknown_key_named() {
        let err = parse("loss.alpa = 0.1\n").unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("loss.alpa"));
        assert!(RunConfig::from_overrides(&[ov("aug.x.kind", "jitter")]).is_err());
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("seed") && err.to_string().contains("duplicate"));
    }

    #[test]
    fn type_errors_name_key_and_type() {
        for (text, key, expected) in [
            ("pretrain.epochs = ten", "pretrain.epochs", "integer"),
            ("loss.tau = fast", "loss.tau", "number"),
            ("loss.tfa = yes", "loss.tfa", "true or false"),
            ("model.padding = reflect", "model.padding", "same, valid"),
            ("semisup.grid = 1,0", "semisup.grid", "list"),
        ] {
            let msg = parse(text).unwrap_err().to_string();
            assert!(msg.contains(key) && msg.contains(expected), "{msg}");
        }
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(parse("seed 3"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn echo_round_trip() {
        let cfg = parse(
            "seed = 9\nsemisup.grid = 1,5,0.25\nloss.alpha = 0.005\naug.0.kind = jitter\naug.0.sigma = 0.07\naug.1.kind = shift\naug.1.prob = 0.5\ndata.manifest = runs/m.txt\n",
        )
        .unwrap();
        let back = parse(&cfg.echo()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.echo(), cfg.echo());
    }

    #[test]
    fn pipelines() {
        let cfg = parse("aug.1.kind = shift\naug.0.kind = jitter\naug.0.sigma = 0.2\naug.0.prob = 0.5\n").unwrap();
        let p = cfg.pipeline("aug", 6).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].kind.name(), "jitter");
        assert_eq!(p[0].kind.param("sigma"), Some(0.2));
        assert_eq!(p[0].probability, 0.5);
        assert_eq!(p[1].kind.name(), "shift");
        assert_eq!(p[1].probability, 0.75);
        assert_eq!(cfg.pipeline("augb", 6).unwrap(), default_pipeline(6));

        let bad = parse("aug.0.kind = jitter\naug.0.max_angle = 1\n").unwrap();
        assert!(bad
            .pipeline("aug", 3)
            .unwrap_err()
            .to_string()
            .contains("aug.0.max_angle"));
        let missing = parse("aug.0.sigma = 1\n").unwrap();
        assert!(missing
            .pipeline("aug", 3)
            .unwrap_err()
            .to_string()
            .contains("aug.0.kind"));
    }

    #[test]
    fn defaults_build_configs() {
        let cfg = RunConfig::default();
        let p = cfg.pretrain_config(6, 6).unwrap();
        assert_eq!((p.epochs, p.batch_size, p.lr), (30, 32, 1e-3));
        assert_eq!(p.encoder.in_channels, 6);
        assert_eq!(
            cfg.grid().unwrap(),
            vec![
                SubsetMode::PerClass(1),
                SubsetMode::PerClass(5),
                SubsetMode::PerClass(25),
                SubsetMode::PerClass(100)
            ]
        );
        assert_eq!(cfg.synthetic_spec().unwrap(), SyntheticSpec::new(4, 500, 50, 6, 0));
        assert!(cfg.opt_str("io.checkpoint").unwrap().is_none());
    }
}
