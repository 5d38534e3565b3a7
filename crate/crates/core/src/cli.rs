//! Command-line front end.
//!
//! Every subcommand writes into `--out` (default `out`). File names are
//! fixed: `config.echo`, `checkpoint.bin`, `losses.csv`, `metrics.csv`,
//! `summary.txt`, `classifier.bin`, `semisup.csv`, `gradcheck.txt` and the
//! `heatmaps/` directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::config::{parse_config, parse_override, RunConfig};
use crate::contrastive::{cmc_loss, ntxent_loss, DeltaForm};
use crate::data::{
    generate_synthetic, generate_synthetic_pair, load_manifest_dataset, normalize_channels, recording_to_csv,
    split_as_recording, Split, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::nn::{
    finite_difference_check, load_checkpoint, relative_error, save_checkpoint, EncoderConfig, ModelParams,
};
use crate::output::{fmt_g9, write_text};
use crate::rng::RngState;
use crate::softdtw::{softdtw_grad, softdtw_value, tfa_batch_loss, CostMatrix};
use crate::train::{
    alignment_between, evaluate_classifier, extract_features, finetune, finetune_multimodal, multimodal_step_loss,
    path_mean_distance, pretrain_multimodal, pretrain_unimodal, semi_supervised_protocol, semisup_csv,
    unimodal_step_loss, write_alignment, Classifier, ContrastiveModel, FrozenEncoder, LossSettings, MetricsReport,
    PretrainMode,
};

#[derive(Debug, Parser)]
#[command(name = "tfa", about = "Temporally-aligned contrastive pretraining for time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic dataset as CSV recordings with a manifest.
    Synth(Common),
    /// Contrastive pretraining; writes the checkpoint and per-epoch losses.
    Pretrain(Common),
    /// Train a classifier on frozen features of a checkpoint.
    Finetune(Common),
    /// Score a saved classifier on the test split.
    Eval(Common),
    /// Labelled-subset grid with repeated classifier fits.
    Semisup(Common),
    /// Distance and soft-alignment heatmaps for two windows.
    Align(Common),
    /// Finite-difference checks of every analytic gradient.
    Gradcheck(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; may be repeated, later values win.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`, applied last.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for `semisup`.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// Runs one command line and returns the process exit code: 0 on success,
/// 1 for usage and configuration errors, 2 for failures during the run.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.command {
        Command::Synth(c) => ("synth", c),
        Command::Pretrain(c) => ("pretrain", c),
        Command::Finetune(c) => ("finetune", c),
        Command::Eval(c) => ("eval", c),
        Command::Semisup(c) => ("semisup", c),
        Command::Align(c) => ("align", c),
        Command::Gradcheck(c) => ("gradcheck", c),
    };
    let cfg = match load_config(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("tfa {name}: {e}");
            return 1;
        }
    };
    let run = Run {
        cfg,
        out: common.out.clone(),
        jobs: common.jobs,
    };
    let result = fs::create_dir_all(&run.out)
        .map_err(|e| Error::io(format!("creating {}", run.out.display()), e))
        .and_then(|()| write_text(&run.out.join("config.echo"), &run.cfg.echo()))
        .and_then(|()| match cli.command {
            Command::Synth(_) => run.synth(),
            Command::Pretrain(_) => run.pretrain(),
            Command::Finetune(_) => run.finetune(),
            Command::Eval(_) => run.eval(),
            Command::Semisup(_) => run.semisup(),
            Command::Align(_) => run.align(),
            Command::Gradcheck(_) => run.gradcheck(),
        });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tfa {name}: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut overrides = common
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    match &common.config {
        Some(path) => parse_config(path, &overrides),
        None => RunConfig::from_overrides(&overrides),
    }
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    jobs: usize,
}

/// One or two index-aligned streams.
struct Data {
    a: WindowedDataset,
    b: Option<WindowedDataset>,
}

impl Data {
    fn datasets(&self) -> Vec<&WindowedDataset> {
        std::iter::once(&self.a).chain(self.b.as_ref()).collect()
    }
}

fn channels(ds: &WindowedDataset) -> Result<usize> {
    ds.window_shape()
        .map(|(_, s)| s)
        .ok_or_else(|| Error::InvalidArgument("the dataset has no windows".into()))
}

impl Run {
    fn multimodal(&self) -> Result<bool> {
        Ok(self.cfg.mode()? == PretrainMode::Multimodal)
    }

    fn raw_data(&self) -> Result<Data> {
        let multimodal = self.multimodal()?;
        if self.cfg.str("data.source")? == "synth" {
            let spec = self.cfg.synthetic_spec()?;
            return Ok(if multimodal {
                let (a, b) = generate_synthetic_pair(
                    &spec,
                    self.cfg.usize("synth.length_b")?,
                    self.cfg.usize("synth.channels_b")?,
                )?;
                Data { a, b: Some(b) }
            } else {
                Data {
                    a: generate_synthetic(&spec)?,
                    b: None,
                }
            });
        }
        let schema = self.cfg.csv_schema()?;
        let window = self.cfg.usize("data.window")?;
        let overlap = self.cfg.float("data.overlap")?;
        let classes = match self.cfg.usize("data.num_classes")? {
            0 => None,
            k => Some(k),
        };
        let load = |key: &str| -> Result<WindowedDataset> {
            let manifest = self
                .cfg
                .opt_str(key)?
                .ok_or_else(|| Error::config(key, "required when data.source = csv"))?;
            load_manifest_dataset(Path::new(manifest), &schema, window, overlap, classes)
        };
        let a = load("data.manifest")?;
        let b = if multimodal {
            Some(load("data.manifest_b")?)
        } else {
            None
        };
        Ok(Data { a, b })
    }

    fn data(&self) -> Result<Data> {
        let data = self.raw_data()?;
        if !self.cfg.bool("data.normalize")? {
            return Ok(data);
        }
        Ok(Data {
            a: normalize_channels(&data.a)?,
            b: data.b.as_ref().map(normalize_channels).transpose()?,
        })
    }

    fn encoder_configs(&self, data: &Data) -> Result<(EncoderConfig, Option<EncoderConfig>)> {
        let a = self.cfg.encoder_config(channels(&data.a)?)?;
        let b = data
            .b
            .as_ref()
            .map(|b| self.cfg.encoder_config(channels(b)?))
            .transpose()?;
        Ok((a, b))
    }

    fn checkpoint_path(&self) -> Result<Option<PathBuf>> {
        Ok(match self.cfg.opt_str("io.checkpoint")? {
            Some("random") => None,
            Some(p) => Some(PathBuf::from(p)),
            None => Some(self.out.join("checkpoint.bin")),
        })
    }

    /// The pretrained model, or a freshly initialised one when
    /// `io.checkpoint = random`.
    fn model(&self, data: &Data) -> Result<ContrastiveModel> {
        let seed = self.cfg.seed()?;
        let mut model = match self.encoder_configs(data)? {
            (a, Some(b)) => ContrastiveModel::multimodal(&a, &b, seed)?,
            (a, None) => ContrastiveModel::unimodal(&a, seed)?,
        };
        if let Some(path) = self.checkpoint_path()? {
            model.params = load_checkpoint(&path, &model.params)?;
        }
        Ok(model)
    }

    fn encoders(&self, data: &Data) -> Result<Vec<FrozenEncoder>> {
        let model = self.model(data)?;
        (0..model.streams.len()).map(|s| model.frozen_encoder(s)).collect()
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        write_text(&self.out.join(name), contents)
    }

    fn synth(&self) -> Result<()> {
        let data = self.raw_data()?;
        for (dir, ds) in [("data", Some(&data.a)), ("data_b", data.b.as_ref())] {
            let Some(ds) = ds else { continue };
            let root = self.out.join(dir);
            fs::create_dir_all(&root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
            let mut manifest = String::new();
            for split in [Split::Train, Split::Val, Split::Test] {
                if ds.indices(split).is_empty() {
                    continue;
                }
                let rec = split_as_recording(ds, split, self.cfg.float("data.sample_rate")?)?;
                write_text(&root.join(format!("{split}.csv")), &recording_to_csv(&rec))?;
                let _ = writeln!(manifest, "{split}.csv {split}");
            }
            write_text(&root.join("manifest.txt"), &manifest)?;
        }
        let (t, s) = data.a.window_shape().unwrap_or((0, 0));
        self.write(
            "summary.txt",
            &format!(
                "windows {}\nwindow_len {t}\nchannels {s}\nclasses {}\ntrain {}\nval {}\ntest {}\n",
                data.a.len(),
                data.a.num_classes,
                data.a.indices(Split::Train).len(),
                data.a.indices(Split::Val).len(),
                data.a.indices(Split::Test).len()
            ),
        )
    }

    fn pretrain(&self) -> Result<()> {
        let data = self.data()?;
        let (ca, cb) = (channels(&data.a)?, data.b.as_ref().map(channels).transpose()?);
        let pcfg = self.cfg.pretrain_config(ca, cb.unwrap_or(ca))?;
        let (model, report) = match &data.b {
            Some(b) => pretrain_multimodal(&data.a, b, &pcfg)?,
            None => pretrain_unimodal(&data.a, &pcfg)?,
        };
        save_checkpoint(&self.out.join("checkpoint.bin"), &model.params)?;
        self.write("losses.csv", &report.to_csv())?;
        let mut summary = format!(
            "mode {}\nseed {}\nepochs {}\n",
            pcfg.mode,
            pcfg.seed,
            report.epochs.len()
        );
        if let Some(last) = report.epochs.last() {
            let _ = writeln!(
                summary,
                "final loss_c {} loss_tfa {} loss {}",
                fmt_g9(last.loss_c),
                fmt_g9(last.loss_tfa),
                fmt_g9(last.loss)
            );
        }
        self.write("summary.txt", &summary)
    }

    fn write_metrics(&self, report: &MetricsReport) -> Result<()> {
        self.write("metrics.csv", &report.class_csv())?;
        self.write("summary.txt", &report.summary())
    }

    fn finetune(&self) -> Result<()> {
        let data = self.data()?;
        let encoders = self.encoders(&data)?;
        let fcfg = self.cfg.finetune_config()?;
        let (clf, report) = match (&encoders[..], &data.b) {
            ([a, b], Some(db)) => finetune_multimodal(a, b, &data.a, db, &fcfg)?,
            _ => finetune(&encoders[0], &data.a, &fcfg)?,
        };
        save_checkpoint(&self.out.join("classifier.bin"), &clf.params)?;
        self.write("losses.csv", &report.to_csv())?;
        self.write_metrics(&report)
    }

    fn eval(&self) -> Result<()> {
        let data = self.data()?;
        let encoders = self.encoders(&data)?;
        let fcfg = self.cfg.finetune_config()?;
        let refs: Vec<&FrozenEncoder> = encoders.iter().collect();
        let test = extract_features(&refs, &data.datasets(), &data.a.indices(Split::Test), fcfg.pooling)?;
        let widths: Vec<usize> = test.streams.iter().map(|x| x.ncols()).collect();
        let mut clf = Classifier::new(fcfg.arch, &widths, data.a.num_classes, fcfg.dropout, fcfg.seed)?;
        let path = match self.cfg.opt_str("io.classifier")? {
            Some(p) => PathBuf::from(p),
            None => self.out.join("classifier.bin"),
        };
        clf.params = load_checkpoint(&path, &clf.params)?;
        let mut report = evaluate_classifier(&clf, &test)?;
        report.seed = fcfg.seed;
        self.write_metrics(&report)
    }

    fn semisup(&self) -> Result<()> {
        let data = self.data()?;
        let encoders = self.encoders(&data)?;
        let refs: Vec<&FrozenEncoder> = encoders.iter().collect();
        let rows = semi_supervised_protocol(
            &refs,
            &data.datasets(),
            &self.cfg.grid()?,
            self.cfg.usize("semisup.repeats")?,
            &self.cfg.finetune_config()?,
            self.cfg.seed()?,
            self.jobs,
        )?;
        let csv = semisup_csv(&rows);
        self.write("semisup.csv", &csv)?;
        self.write("summary.txt", &csv)
    }

    fn align(&self) -> Result<()> {
        let data = self.data()?;
        let encoders = self.encoders(&data)?;
        let gamma = self.cfg.float("align.gamma")?;
        let (i, j) = (self.cfg.usize("align.first")?, self.cfg.usize("align.second")?);
        for (key, idx) in [("align.first", i), ("align.second", j)] {
            if idx >= data.a.len() {
                return Err(Error::config(
                    key,
                    format!("window {idx} out of range, dataset has {}", data.a.len()),
                ));
            }
        }
        let dir = self.out.join("heatmaps");
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut summary = String::from("pair,softdtw,path_mean_distance\n");
        let mut emit = |stem: String, al: crate::train::Alignment| -> Result<()> {
            write_alignment(&dir, &stem, &al)?;
            let _ = writeln!(
                summary,
                "{stem},{},{}",
                fmt_g9(al.softdtw),
                fmt_g9(path_mean_distance(&al.distances)?)
            );
            Ok(())
        };
        let (wa, wb) = (&data.a.windows[i], &data.a.windows[j]);
        emit(
            format!("pair_{i}_{j}"),
            alignment_between(&encoders[0], wa.values.view(), &encoders[0], wb.values.view(), gamma)?,
        )?;
        if let (Some(b), Some(enc_b)) = (&data.b, encoders.get(1)) {
            for k in [i, j] {
                emit(
                    format!("cross_{k}"),
                    alignment_between(
                        &encoders[0],
                        data.a.windows[k].values.view(),
                        enc_b,
                        b.windows[k].values.view(),
                        gamma,
                    )?,
                )?;
            }
        }
        self.write("summary.txt", &summary)
    }

    fn gradcheck(&self) -> Result<()> {
        let seed = self.cfg.seed()?;
        let eps = self.cfg.float("gradcheck.epsilon")?;
        let model_eps = self.cfg.float("gradcheck.model_epsilon")?;
        let tol = self.cfg.float("gradcheck.tolerance")?;
        let coords = self.cfg.usize("gradcheck.coords")?;
        let suites = gradcheck_suites(seed, eps, model_eps, coords)?;
        let mut report = String::from("suite,max_rel_error,coords,status\n");
        let mut failed = Vec::new();
        for (name, err, n) in &suites {
            let ok = *err <= tol;
            if !ok {
                failed.push(*name);
            }
            let _ = writeln!(
                report,
                "{name},{},{n},{}",
                fmt_g9(*err),
                if ok { "pass" } else { "FAIL" }
            );
        }
        let worst = suites.iter().map(|s| s.1).fold(0.0, f64::max);
        let _ = writeln!(report, "max_rel_error {}\ntolerance {}", fmt_g9(worst), fmt_g9(tol));
        self.write("gradcheck.txt", &report)?;
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::GradCheck(failed.join(", ")))
        }
    }
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut RngState) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.uniform_range(lo, hi))
}

/// Largest relative error between `grad` and central differences of `f`
/// over every entry of `x`.
fn fd_max_error(
    x: &Array2<f64>,
    grad: &Array2<f64>,
    eps: f64,
    mut f: impl FnMut(&Array2<f64>) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = xp[[r, c]];
        xp[[r, c]] = orig + eps;
        let up = f(&xp)?;
        xp[[r, c]] = orig - eps;
        let down = f(&xp)?;
        xp[[r, c]] = orig;
        worst = worst.max(relative_error(grad[[r, c]], (up - down) / (2.0 * eps)));
    }
    Ok(worst)
}

/// Moves every trainable parameter off its initial value. Zero biases over
/// all-zero rows put ReLU inputs exactly on the hinge, where central
/// differences see a kink instead of a gradient.
fn jitter(params: &mut ModelParams, rng: &mut RngState) {
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        if !params.is_trainable(&name) {
            continue;
        }
        if let Some(t) = params.get_mut(&name) {
            t.value.iter_mut().for_each(|v| *v += rng.normal(0.0, 0.1));
        }
    }
}

/// `(suite, max relative error, coordinates checked)` for the soft-DTW
/// gradient, both contrastive losses, the alignment loss and whole-model
/// backpropagation of both pretraining modes. The models are probed with
/// their own step `model_eps`: small enough that a step rarely crosses a
/// ReLU hinge, large enough to stay clear of rounding noise.
fn gradcheck_suites(seed: u64, eps: f64, model_eps: f64, coords: usize) -> Result<Vec<(&'static str, f64, usize)>> {
    let mut out = Vec::new();
    let mut rng = RngState::derive(seed, &[0x9c]);

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = random_matrix(6, 7, 0.0, 2.0, &mut rng);
        let (_, table) = softdtw_value(&CostMatrix(d.clone()), 0.1)?;
        let e = softdtw_grad(&CostMatrix(d.clone()), &table, 0.1)?;
        worst = worst.max(fd_max_error(&d, &e.0, eps, |x| {
            Ok(softdtw_value(&CostMatrix(x.clone()), 0.1)?.0)
        })?);
    }
    out.push(("softdtw", worst, 20 * 42));

    let z = random_matrix(16, 8, -1.0, 1.0, &mut rng);
    let g = ntxent_loss(z.view(), 0.1, DeltaForm::Scaled)?;
    let err = fd_max_error(&z, &g.grads[0], eps, |x| {
        Ok(ntxent_loss(x.view(), 0.1, DeltaForm::Scaled)?.value)
    })?;
    out.push(("ntxent", err, z.len()));

    let a = random_matrix(16, 8, -1.0, 1.0, &mut rng);
    let b = random_matrix(16, 8, -1.0, 1.0, &mut rng);
    let (g, _) = cmc_loss(a.view(), b.view(), 0.1, DeltaForm::Scaled)?;
    let ea = fd_max_error(&a, &g.grads[0], eps, |x| {
        Ok(cmc_loss(x.view(), b.view(), 0.1, DeltaForm::Scaled)?.0.value)
    })?;
    let eb = fd_max_error(&b, &g.grads[1], eps, |x| {
        Ok(cmc_loss(a.view(), x.view(), 0.1, DeltaForm::Scaled)?.0.value)
    })?;
    out.push(("cmc", ea.max(eb), a.len() + b.len()));

    let ha = random_matrix(8, 4, -1.0, 1.0, &mut rng);
    let hb = random_matrix(7, 4, -1.0, 1.0, &mut rng);
    let t = tfa_batch_loss(&[(ha.view(), hb.view())], 0.1)?;
    let (ga, gb) = &t.feature_grads[0];
    let ea = fd_max_error(&ha, ga, eps, |x| {
        Ok(tfa_batch_loss(&[(x.view(), hb.view())], 0.1)?.value)
    })?;
    let eb = fd_max_error(&hb, gb, eps, |x| {
        Ok(tfa_batch_loss(&[(ha.view(), x.view())], 0.1)?.value)
    })?;
    out.push(("tfa", ea.max(eb), ha.len() + hb.len()));

    let tiny = EncoderConfig {
        hidden: 4,
        layers: 2,
        kernel: 3,
        proj_dim: 4,
        ..EncoderConfig::new(3)
    };
    let loss = LossSettings {
        alpha: 0.1,
        ..LossSettings::default()
    };
    let views: Vec<Array2<f64>> = (0..8).map(|_| random_matrix(8, 3, -1.0, 1.0, &mut rng)).collect();
    let mut model = ContrastiveModel::unimodal(&tiny, seed)?;
    jitter(&mut model.params, &mut rng);
    let stream = model.streams[0].clone();
    let r = finite_difference_check(
        &mut model.params,
        |p, g| Ok(unimodal_step_loss(&stream, p, &views, &loss, g)?.loss),
        model_eps,
        coords,
        seed,
    )?;
    out.push(("pipeline_unimodal", r.max_rel_error, r.coords_checked));

    let views_b: Vec<Array2<f64>> = (0..4).map(|_| random_matrix(6, 3, -1.0, 1.0, &mut rng)).collect();
    let mut model = ContrastiveModel::multimodal(&tiny, &tiny, seed)?;
    jitter(&mut model.params, &mut rng);
    let (sa, sb) = (model.streams[0].clone(), model.streams[1].clone());
    let r = finite_difference_check(
        &mut model.params,
        |p, g| Ok(multimodal_step_loss(&sa, &sb, p, &views[..4], &views_b, &loss, g)?.loss),
        model_eps,
        coords,
        seed,
    )?;
    out.push(("pipeline_multimodal", r.max_rel_error, r.coords_checked));
    Ok(out)
}
