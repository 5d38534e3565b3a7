//! Recordings, sliding windows, per-channel normalisation, synthetic data and
//! labelled-subset selection.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Floor applied to per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// A raw multichannel recording (`T_raw × S`).
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub samples: Array2<f64>,
    pub sample_rate_hz: f64,
    pub labels: Option<Vec<usize>>,
}

impl Recording {
    pub fn new(samples: Array2<f64>, sample_rate_hz: f64, labels: Option<Vec<usize>>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "recording must have at least one sample and one channel, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != samples.nrows() {
                return Err(Error::Shape(format!(
                    "{} labels for {} samples",
                    l.len(),
                    samples.nrows()
                )));
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }
}

/// A `T × S` window, optionally labelled.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeWindow {
    pub values: Array2<f64>,
    pub label: Option<usize>,
}

impl TimeWindow {
    pub fn new(values: Array2<f64>, label: Option<usize>) -> Self {
        Self { values, label }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<TimeWindow>,
    pub splits: Vec<Split>,
    pub num_classes: usize,
    pub seed: u64,
}

impl WindowedDataset {
    pub fn new(windows: Vec<TimeWindow>, splits: Vec<Split>, num_classes: usize, seed: u64) -> Result<Self> {
        if windows.len() != splits.len() {
            return Err(Error::Shape(format!(
                "{} windows but {} split tags",
                windows.len(),
                splits.len()
            )));
        }
        if let Some(first) = windows.first() {
            let shape = first.values.dim();
            if let Some(w) = windows.iter().find(|w| w.values.dim() != shape) {
                return Err(Error::Shape(format!(
                    "window shape {:?} differs from {:?}",
                    w.values.dim(),
                    shape
                )));
            }
        }
        if let Some(l) = windows.iter().filter_map(|w| w.label).find(|&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {l} outside [0, {num_classes})")));
        }
        Ok(Self {
            windows,
            splits,
            num_classes,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// `(T, S)` of every window, or `None` for an empty dataset.
    pub fn window_shape(&self) -> Option<(usize, usize)> {
        self.windows.first().map(|w| w.values.dim())
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_windows(&self, split: Split) -> Vec<&TimeWindow> {
        self.windows
            .iter()
            .zip(&self.splits)
            .filter(|(_, &s)| s == split)
            .map(|(w, _)| w)
            .collect()
    }

    /// Train-split windows with labels removed. Pretraining only ever sees
    /// this view.
    pub fn unlabeled_train(&self) -> Vec<TimeWindow> {
        self.split_windows(Split::Train)
            .into_iter()
            .map(|w| TimeWindow::new(w.values.clone(), None))
            .collect()
    }

    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for w in self.split_windows(split) {
            if let Some(l) = w.label {
                counts[l] += 1;
            }
        }
        counts
    }

    pub fn is_labeled(&self) -> bool {
        !self.windows.is_empty() && self.windows.iter().all(|w| w.label.is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LabelColumn {
    /// Use a column named `label` when the header has one.
    Auto,
    /// The named column must exist.
    Required(String),
    None,
}

/// Column layout of a recording CSV.
///
/// The default layout treats the first column as a timestamp, a column named
/// `label` as the per-sample class id, a column named `subject` as reserved,
/// and every other column as a channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    /// `None` means the first column.
    pub time_column: Option<String>,
    /// `None` means every remaining column.
    pub channel_columns: Option<Vec<String>>,
    pub label_column: LabelColumn,
    pub sample_rate_hz: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time_column: None,
            channel_columns: None,
            label_column: LabelColumn::Auto,
            sample_rate_hz: 30.0,
        }
    }
}

const RESERVED_COLUMNS: &[&str] = &["subject"];

pub fn load_recordings_csv(path: &Path, schema: &CsvSchema) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_recording_csv(&text, path, schema)
}

/// Parses recording CSV text; `origin` is only used in error messages.
pub fn parse_recording_csv(text: &str, origin: &Path, schema: &CsvSchema) -> Result<Recording> {
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split(',').map(str::trim).collect(),
        None => return Err(Error::Schema(format!("{}: empty file", origin.display()))),
    };
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", origin.display())))
    };

    let time_idx = match &schema.time_column {
        Some(name) => find(name)?,
        None => 0,
    };
    let label_idx = match &schema.label_column {
        LabelColumn::Auto => header.iter().position(|h| *h == "label"),
        LabelColumn::Required(name) => Some(find(name)?),
        LabelColumn::None => None,
    };
    let channel_idx: Vec<usize> = match &schema.channel_columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| i != time_idx && Some(i) != label_idx && !RESERVED_COLUMNS.contains(&header[i]))
            .collect(),
    };
    if channel_idx.is_empty() {
        return Err(Error::Schema(format!("{}: no channel columns", origin.display())));
    }

    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(origin),
        line,
        message,
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", header.len(), cells.len()),
            ));
        }
        for &c in &channel_idx {
            let v: f64 = cells[c]
                .parse()
                .map_err(|_| parse_err(line_no, format!("column `{}`: not a number: `{}`", header[c], cells[c])))?;
            values.push(v);
        }
        if let Some(li) = label_idx {
            let l: usize = cells[li]
                .parse()
                .map_err(|_| parse_err(line_no, format!("label is not a non-negative integer: `{}`", cells[li])))?;
            labels.push(l);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Schema(format!("{}: no data rows", origin.display())));
    }
    let samples = Array2::from_shape_vec((rows, channel_idx.len()), values).map_err(|e| Error::Shape(e.to_string()))?;
    Recording::new(samples, schema.sample_rate_hz, label_idx.map(|_| labels))
}

/// Writes a recording in the CSV layout read by [`load_recordings_csv`].
pub fn recording_to_csv(rec: &Recording) -> String {
    use crate::output::fmt_g9;
    let mut out = String::from("t");
    for c in 0..rec.channels() {
        out.push_str(&format!(",ch{c}"));
    }
    if rec.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (t, row) in rec.samples.rows().into_iter().enumerate() {
        out.push_str(&t.to_string());
        for &v in row {
            out.push(',');
            out.push_str(&fmt_g9(v));
        }
        if let Some(l) = &rec.labels {
            out.push(',');
            out.push_str(&l[t].to_string());
        }
        out.push('\n');
    }
    out
}

/// Distance between consecutive window starts.
pub fn window_stride(window_len: usize, overlap: f64) -> usize {
    ((window_len as f64) * (1.0 - overlap)).ceil().max(1.0) as usize
}

/// Sliding windows of `window_len` samples; trailing partial windows are
/// dropped. Labels are the per-window majority, ties to the lower class id.
pub fn make_windows(rec: &Recording, window_len: usize, overlap: f64) -> Result<Vec<TimeWindow>> {
    if window_len == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!("overlap {overlap} outside [0, 1)")));
    }
    if window_len > rec.len() {
        return Err(Error::InvalidArgument(format!(
            "window length {window_len} exceeds recording length {}",
            rec.len()
        )));
    }
    let stride = window_stride(window_len, overlap);
    let windows = (0..=rec.len() - window_len)
        .step_by(stride)
        .map(|start| {
            let values = rec.samples.slice(s![start..start + window_len, ..]).to_owned();
            let label = rec
                .labels
                .as_ref()
                .map(|l| majority_label(&l[start..start + window_len]));
            TimeWindow::new(values, label)
        })
        .collect();
    Ok(windows)
}

fn majority_label(labels: &[usize]) -> usize {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    // Earliest index wins ties.
    counts
        .iter()
        .enumerate()
        .fold((0, 0), |(best, n), (c, &k)| if k > n { (c, k) } else { (best, n) })
        .0
}

/// Per-channel statistics of the train split.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl ChannelStats {
    pub fn from_train(ds: &WindowedDataset) -> Result<Self> {
        let train = ds.split_windows(Split::Train);
        let Some(first) = train.first() else {
            return Err(Error::InvalidArgument("train split is empty".into()));
        };
        let s = first.channels();
        let mut sum = Array1::<f64>::zeros(s);
        let mut count = 0usize;
        for w in &train {
            sum += &w.values.sum_axis(Axis(0));
            count += w.len();
        }
        let mean = sum / count as f64;
        let mut sq = Array1::<f64>::zeros(s);
        for w in &train {
            for row in w.values.rows() {
                let d = &row - &mean;
                sq += &(&d * &d);
            }
        }
        let std = (sq / count as f64).mapv(|v| v.sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn apply(&self, w: &TimeWindow) -> TimeWindow {
        let values = (&w.values - &self.mean) / &self.std;
        TimeWindow::new(values, w.label)
    }
}

/// Zero-mean / unit-variance per channel, with statistics from the train
/// split applied to every split.
pub fn normalize_channels(ds: &WindowedDataset) -> Result<WindowedDataset> {
    let stats = ChannelStats::from_train(ds)?;
    Ok(WindowedDataset {
        windows: ds.windows.iter().map(|w| stats.apply(w)).collect(),
        splits: ds.splits.clone(),
        num_classes: ds.num_classes,
        seed: ds.seed,
    })
}

/// Parameters of the synthetic frequency-separated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub windows_per_class: usize,
    pub window_len: usize,
    pub channels: usize,
    pub seed: u64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_std: f64,
    /// Fundamental frequency of class 0 in cycles per timestep; class `c`
    /// uses `(c + 1) * base_freq`.
    pub base_freq: f64,
    /// Number of harmonics mixed into every channel.
    pub harmonics: usize,
}

impl SyntheticSpec {
    pub fn new(num_classes: usize, windows_per_class: usize, window_len: usize, channels: usize, seed: u64) -> Self {
        Self {
            num_classes,
            windows_per_class,
            window_len,
            channels,
            seed,
            noise_std: 0.1,
            base_freq: 0.04,
            harmonics: 3,
        }
    }
}

/// Latent description of one synthetic instance; rendering it at different
/// lengths gives index-aligned streams of the same instance.
#[derive(Clone, Debug)]
struct SynthInstance {
    class: usize,
    phase: f64,
    /// Per channel: gain and per-harmonic (weight, phase offset).
    channels: Vec<(f64, Vec<(f64, f64)>)>,
}

impl SynthInstance {
    fn draw(class: usize, channels: usize, harmonics: usize, rng: &mut RngState) -> Self {
        let phase = rng.uniform_range(0.0, 2.0 * PI);
        let channels = (0..channels)
            .map(|_| {
                let gain = rng.uniform_range(0.5, 1.5);
                let mix = (0..harmonics)
                    .map(|h| {
                        let weight = if h == 0 { 1.0 } else { rng.uniform_range(0.0, 0.6) };
                        (weight, rng.uniform_range(0.0, 2.0 * PI))
                    })
                    .collect();
                (gain, mix)
            })
            .collect();
        Self { class, phase, channels }
    }

    /// Renders `len` samples covering `span` timesteps of the base clock.
    fn render(&self, len: usize, span: f64, base_freq: f64, noise_std: f64, rng: &mut RngState) -> Array2<f64> {
        let freq = (self.class + 1) as f64 * base_freq;
        let step = span / len as f64;
        Array2::from_shape_fn((len, self.channels.len()), |(t, c)| {
            let time = t as f64 * step;
            let (gain, mix) = &self.channels[c];
            gain * mix
                .iter()
                .enumerate()
                .map(|(h, &(w, off))| {
                    w * (2.0 * PI * (h + 1) as f64 * freq * time + (h + 1) as f64 * self.phase + off).sin()
                })
                .sum::<f64>()
        })
        .mapv(|v| {
            if noise_std > 0.0 {
                v + rng.normal(0.0, noise_std)
            } else {
                v
            }
        })
    }
}

fn validate_synth(spec: &SyntheticSpec) -> Result<()> {
    if spec.num_classes < 2 {
        return Err(Error::InvalidArgument("synthetic data needs at least 2 classes".into()));
    }
    if spec.channels < 3 {
        return Err(Error::InvalidArgument(
            "synthetic data needs at least 3 channels".into(),
        ));
    }
    if spec.window_len == 0 || spec.windows_per_class == 0 {
        return Err(Error::InvalidArgument(
            "window length and windows per class must be positive".into(),
        ));
    }
    if spec.harmonics == 0 || !(spec.noise_std >= 0.0) || !(spec.base_freq > 0.0) {
        return Err(Error::InvalidArgument("invalid synthetic signal parameters".into()));
    }
    Ok(())
}

/// Stratified 70/15/15 split tags, per class, for `per_class` instances in
/// interleaved class order.
fn stratified_splits(num_classes: usize, per_class: usize, rng: &mut RngState) -> Vec<Split> {
    let n_train = per_class * 70 / 100;
    let n_val = per_class * 15 / 100;
    let mut splits = vec![Split::Test; num_classes * per_class];
    for c in 0..num_classes {
        let order = rng.permutation(per_class);
        for (rank, &i) in order.iter().enumerate() {
            let tag = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            splits[i * num_classes + c] = tag;
        }
    }
    splits
}

/// Frequency-separated multichannel sinusoids. Deterministic in `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<WindowedDataset> {
    validate_synth(spec)?;
    let mut rng = RngState::derive(spec.seed, &[0x5717]);
    let mut windows = Vec::with_capacity(spec.num_classes * spec.windows_per_class);
    for _ in 0..spec.windows_per_class {
        for c in 0..spec.num_classes {
            let inst = SynthInstance::draw(c, spec.channels, spec.harmonics, &mut rng);
            let values = inst.render(
                spec.window_len,
                spec.window_len as f64,
                spec.base_freq,
                spec.noise_std,
                &mut rng,
            );
            windows.push(TimeWindow::new(values, Some(c)));
        }
    }
    let mut split_rng = RngState::derive(spec.seed, &[0x5011]);
    let splits = stratified_splits(spec.num_classes, spec.windows_per_class, &mut split_rng);
    WindowedDataset::new(windows, splits, spec.num_classes, spec.seed)
}

/// Two index-aligned synthetic streams of the same instances: stream A as in
/// [`generate_synthetic`], stream B rendered over the same time span with
/// `len_b` samples, `channels_b` channels and its own channel mix.
pub fn generate_synthetic_pair(
    spec: &SyntheticSpec,
    len_b: usize,
    channels_b: usize,
) -> Result<(WindowedDataset, WindowedDataset)> {
    validate_synth(spec)?;
    validate_synth(&SyntheticSpec {
        window_len: len_b,
        channels: channels_b,
        ..spec.clone()
    })?;
    let mut rng = RngState::derive(spec.seed, &[0x5717]);
    let mut rng_b = RngState::derive(spec.seed, &[0x5718]);
    let n = spec.num_classes * spec.windows_per_class;
    let mut wa = Vec::with_capacity(n);
    let mut wb = Vec::with_capacity(n);
    let span = spec.window_len as f64;
    for _ in 0..spec.windows_per_class {
        for c in 0..spec.num_classes {
            let inst = SynthInstance::draw(c, spec.channels, spec.harmonics, &mut rng);
            wa.push(TimeWindow::new(
                inst.render(spec.window_len, span, spec.base_freq, spec.noise_std, &mut rng),
                Some(c),
            ));
            let mut other = SynthInstance::draw(c, channels_b, spec.harmonics, &mut rng_b);
            other.phase = inst.phase;
            wb.push(TimeWindow::new(
                other.render(len_b, span, spec.base_freq, spec.noise_std, &mut rng_b),
                Some(c),
            ));
        }
    }
    let mut split_rng = RngState::derive(spec.seed, &[0x5011]);
    let splits = stratified_splits(spec.num_classes, spec.windows_per_class, &mut split_rng);
    Ok((
        WindowedDataset::new(wa, splits.clone(), spec.num_classes, spec.seed)?,
        WindowedDataset::new(wb, splits, spec.num_classes, spec.seed)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SubsetMode {
    /// `k` labelled training windows per class.
    PerClass(usize),
    /// Fraction of the training split, stratified by class.
    Fraction(f64),
}

impl fmt::Display for SubsetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetMode::PerClass(k) => write!(f, "{k}"),
            SubsetMode::Fraction(p) => write!(f, "{}", crate::output::fmt_g9(*p)),
        }
    }
}

/// Indices of the labelled training windows [`select_labeled_subset`]
/// keeps, in ascending order.
pub fn labeled_subset_indices(ds: &WindowedDataset, mode: SubsetMode, seed: u64) -> Result<Vec<usize>> {
    let train = ds.indices(Split::Train);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for &i in &train {
        let Some(l) = ds.windows[i].label else {
            return Err(Error::InvalidArgument(format!("train window {i} has no label")));
        };
        by_class[l].push(i);
    }
    let quotas: Vec<usize> = match mode {
        SubsetMode::PerClass(k) => {
            if k == 0 {
                return Err(Error::InvalidArgument("k must be at least 1".into()));
            }
            if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < k) {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} exceeds the {} training windows of class {c}",
                    members.len()
                )));
            }
            vec![k; ds.num_classes]
        }
        SubsetMode::Fraction(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!("fraction {p} outside (0, 1]")));
            }
            let total = (p * train.len() as f64).ceil() as usize;
            largest_remainder(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), total)
        }
    };

    let mut rng = RngState::derive(seed, &[0x5e1]);
    let mut picked = Vec::with_capacity(quotas.iter().sum());
    for (members, &quota) in by_class.iter().zip(&quotas) {
        picked.extend(
            rng.sample_without_replacement(members.len(), quota)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Restricts the train split to a labelled subset; val and test are kept.
/// The returned dataset preserves the original window order.
pub fn select_labeled_subset(ds: &WindowedDataset, mode: SubsetMode, seed: u64) -> Result<WindowedDataset> {
    let mut keep = vec![false; ds.len()];
    for i in labeled_subset_indices(ds, mode, seed)? {
        keep[i] = true;
    }
    for (i, &s) in ds.splits.iter().enumerate() {
        if s != Split::Train {
            keep[i] = true;
        }
    }
    let (windows, splits) = ds
        .windows
        .iter()
        .zip(&ds.splits)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|((w, &s), _)| (w.clone(), s))
        .unzip();
    WindowedDataset::new(windows, splits, ds.num_classes, seed)
}

/// Splits `total` across classes proportionally to `sizes`, handing the
/// remainder to the largest fractional parts (lower class id first).
fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        if quota[c] < sizes[c] {
            quota[c] += 1;
            left -= 1;
        }
    }
    quota
}

/// Reads a manifest of `path split` lines. Relative paths resolve against
/// the manifest's directory. Blank lines and `#` comments are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, Split)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(file), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                message: "expected `<path> <split>`".into(),
            });
        };
        let split = Split::parse(tag).ok_or_else(|| Error::Parse {
            path: path.into(),
            line: i + 1,
            message: format!("unknown split `{tag}`"),
        })?;
        let p = Path::new(file);
        out.push((if p.is_absolute() { p.into() } else { base.join(p) }, split));
    }
    Ok(out)
}

/// Loads every recording in a manifest and windows it.
pub fn load_manifest_dataset(
    manifest: &Path,
    schema: &CsvSchema,
    window_len: usize,
    overlap: f64,
    num_classes: Option<usize>,
) -> Result<WindowedDataset> {
    let mut windows = Vec::new();
    let mut splits = Vec::new();
    for (file, split) in read_manifest(manifest)? {
        let rec = load_recordings_csv(&file, schema)?;
        for w in make_windows(&rec, window_len, overlap)? {
            windows.push(w);
            splits.push(split);
        }
    }
    let inferred = windows.iter().filter_map(|w| w.label).max().map_or(0, |m| m + 1);
    let num_classes = num_classes.unwrap_or(inferred);
    WindowedDataset::new(windows, splits, num_classes, 0)
}

/// Concatenates the windows of one split back to back as a recording, so
/// that windowing it with `overlap = 0` returns the same windows.
pub fn split_as_recording(ds: &WindowedDataset, split: Split, sample_rate_hz: f64) -> Result<Recording> {
    let windows = ds.split_windows(split);
    let Some(first) = windows.first() else {
        return Err(Error::InvalidArgument(format!("split {split} is empty")));
    };
    let (t, s) = first.values.dim();
    let mut samples = Array2::zeros((t * windows.len(), s));
    let mut labels = Vec::with_capacity(t * windows.len());
    for (k, w) in windows.iter().enumerate() {
        samples.slice_mut(s![k * t..(k + 1) * t, ..]).assign(&w.values);
        labels.extend(std::iter::repeat_n(w.label.unwrap_or(0), t));
    }
    let labeled = windows.iter().all(|w| w.label.is_some());
    Recording::new(samples, sample_rate_hz, labeled.then_some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn rec(n: usize, s: usize) -> Recording {
        Recording::new(Array2::from_shape_fn((n, s), |(t, c)| (t * s + c) as f64), 30.0, None).unwrap()
    }

    #[test]
    fn parses_three_row_file() {
        let r = parse_recording_csv(
            "t,a,b\n0,1.0,2.0\n1,1.5,2.5\n2,2.0,3.0",
            Path::new("x.csv"),
            &CsvSchema::default(),
        )
        .unwrap();
        assert_eq!(r.samples.dim(), (3, 2));
        assert_eq!(r.samples[[1, 0]], 1.5);
        assert!(r.labels.is_none());
    }

    #[test]
    fn parses_label_column() {
        let r = parse_recording_csv(
            "t,a,label\n0,1,0\n1,2,0\n2,3,0\n",
            Path::new("x.csv"),
            &CsvSchema::default(),
        )
        .unwrap();
        assert_eq!(r.labels.clone().unwrap(), vec![0, 0, 0]);
        assert_eq!(r.channels(), 1);
    }

    #[test]
    fn bad_cell_names_line() {
        let mut text = String::from("t,a\n");
        for i in 0..10 {
            if i == 5 {
                text.push_str("5,oops\n");
            } else {
                text.push_str(&format!("{i},1.0\n"));
            }
        }
        // Header is line 1, so data row i sits on line i + 2.
        let err = parse_recording_csv(&text, Path::new("bad.csv"), &CsvSchema::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string(&text).contains("line 7"));
    }

    fn err_string(text: &str) -> String {
        parse_recording_csv(text, Path::new("bad.csv"), &CsvSchema::default())
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn missing_declared_column_is_schema_error() {
        let schema = CsvSchema {
            channel_columns: Some(vec!["a".into(), "gyro_z".into()]),
            ..CsvSchema::default()
        };
        let err = parse_recording_csv("t,a\n0,1\n", Path::new("x.csv"), &schema).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("gyro_z")));

        let schema = CsvSchema {
            label_column: LabelColumn::Required("activity".into()),
            ..CsvSchema::default()
        };
        assert!(matches!(
            parse_recording_csv("t,a\n0,1\n", Path::new("x.csv"), &schema),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn subject_column_is_not_a_channel() {
        let r = parse_recording_csv(
            "t,a,b,subject,label\n0,1,2,7,1\n",
            Path::new("x.csv"),
            &CsvSchema::default(),
        )
        .unwrap();
        assert_eq!(r.channels(), 2);
    }

    #[test]
    fn window_starts_half_overlap() {
        let r = rec(100, 2);
        let w = make_windows(&r, 50, 0.5).unwrap();
        assert_eq!(w.len(), 3);
        let starts: Vec<f64> = w.iter().map(|w| w.values[[0, 0]] / 2.0).collect();
        assert_eq!(starts, vec![0.0, 25.0, 50.0]);
    }

    #[test]
    fn single_window_and_no_overlap() {
        assert_eq!(make_windows(&rec(50, 1), 50, 0.5).unwrap().len(), 1);
        let w = make_windows(&rec(100, 1), 25, 0.0).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w[1].values[[0, 0]], 25.0);
    }

    #[test]
    fn window_longer_than_recording_fails() {
        assert!(make_windows(&rec(10, 1), 11, 0.5).is_err());
    }

    #[test]
    fn majority_label_ties_to_lower_id() {
        let r = Recording::new(Array2::zeros((4, 1)), 1.0, Some(vec![2, 1, 2, 1])).unwrap();
        let w = make_windows(&r, 4, 0.0).unwrap();
        assert_eq!(w[0].label, Some(1));
        assert_eq!(majority_label(&[3, 3, 0]), 3);
    }

    fn toy_dataset() -> WindowedDataset {
        let mk = |v: Array2<f64>| TimeWindow::new(v, Some(0));
        WindowedDataset::new(
            vec![
                mk(array![[5.0, 1.0], [5.0, 3.0]]),
                mk(array![[5.0, -1.0], [5.0, 5.0]]),
                mk(array![[5.0, 100.0], [5.0, 100.0]]),
            ],
            vec![Split::Train, Split::Train, Split::Test],
            1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn constant_channel_becomes_zero() {
        let n = normalize_channels(&toy_dataset()).unwrap();
        for w in &n.windows {
            assert!(w.values.column(0).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn normalization_uses_train_statistics_only() {
        let n = normalize_channels(&toy_dataset()).unwrap();
        let train_mean: f64 = n
            .split_windows(Split::Train)
            .iter()
            .map(|w| w.values.column(1).sum())
            .sum::<f64>()
            / 4.0;
        assert!(train_mean.abs() < 1e-12);
        let test = n.split_windows(Split::Test)[0];
        assert!(test.values[[0, 1]] > 10.0);
    }

    #[test]
    fn normalize_requires_train() {
        let mut ds = toy_dataset();
        ds.splits = vec![Split::Test; 3];
        assert!(normalize_channels(&ds).is_err());
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let spec = SyntheticSpec::new(4, 50, 20, 3, 11);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        let counts: Vec<usize> = (0..4)
            .map(|c| a.windows.iter().filter(|w| w.label == Some(c)).count())
            .collect();
        assert_eq!(counts, vec![50; 4]);
        assert_eq!(a.class_counts(Split::Train), vec![35; 4]);
        assert_eq!(a.class_counts(Split::Val), vec![7; 4]);
        assert_eq!(a.class_counts(Split::Test), vec![8; 4]);
    }

    #[test]
    fn synthetic_noise_free_is_periodic() {
        let mut spec = SyntheticSpec::new(2, 4, 100, 3, 5);
        spec.noise_std = 0.0;
        let ds = generate_synthetic(&spec).unwrap();
        // 25 steps is one period of class 0 and two of class 1.
        let period = 25;
        for w in &ds.windows {
            for t in 0..100 - period {
                for c in 0..3 {
                    assert!((w.values[[t, c]] - w.values[[t + period, c]]).abs() < 1e-9);
                }
            }
        }
        let mut spec1 = spec.clone();
        spec1.num_classes = 4;
        let ds = generate_synthetic(&spec1).unwrap();
        let w = ds.windows.iter().find(|w| w.label == Some(3)).unwrap();
        // Class 3 frequency 0.16: period 6.25, so 25 steps is exactly 4 periods.
        assert!((w.values[[3, 0]] - w.values[[28, 0]]).abs() < 1e-9);
    }

    #[test]
    fn synthetic_pair_is_index_aligned() {
        let spec = SyntheticSpec::new(3, 10, 50, 6, 2);
        let (a, b) = generate_synthetic_pair(&spec, 30, 4).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a.splits, b.splits);
        assert_eq!(b.window_shape(), Some((30, 4)));
        assert!(a.windows.iter().zip(&b.windows).all(|(x, y)| x.label == y.label));
    }

    #[test]
    fn synthetic_rejects_bad_args() {
        assert!(generate_synthetic(&SyntheticSpec::new(1, 5, 10, 3, 0)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(2, 5, 10, 2, 0)).is_err());
    }

    #[test]
    fn subset_per_class_and_fraction() {
        let ds = generate_synthetic(&SyntheticSpec::new(4, 40, 10, 3, 1)).unwrap();
        let s = select_labeled_subset(&ds, SubsetMode::PerClass(1), 3).unwrap();
        assert_eq!(s.class_counts(Split::Train), vec![1; 4]);
        assert_eq!(s.indices(Split::Test).len(), ds.indices(Split::Test).len());

        let s = select_labeled_subset(&ds, SubsetMode::Fraction(0.5), 3).unwrap();
        assert_eq!(s.indices(Split::Train).len(), 56);
        assert_eq!(s.class_counts(Split::Train), vec![14; 4]);
    }

    #[test]
    fn subset_k_too_large_names_class() {
        let ds = generate_synthetic(&SyntheticSpec::new(2, 10, 10, 3, 1)).unwrap();
        let err = select_labeled_subset(&ds, SubsetMode::PerClass(8), 0).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn subset_seeds_differ_sizes_match() {
        let ds = generate_synthetic(&SyntheticSpec::new(4, 40, 10, 3, 1)).unwrap();
        let a = select_labeled_subset(&ds, SubsetMode::PerClass(5), 1).unwrap();
        let b = select_labeled_subset(&ds, SubsetMode::PerClass(5), 2).unwrap();
        assert_eq!(a.len(), b.len());
        assert_ne!(a.windows, b.windows);
    }

    #[test]
    fn largest_remainder_hits_total() {
        assert_eq!(largest_remainder(&[3, 3, 4], 5), vec![2, 1, 2]);
        assert_eq!(largest_remainder(&[10, 10], 20), vec![10, 10]);
    }

    #[test]
    fn split_roundtrips_through_recording() {
        let ds = generate_synthetic(&SyntheticSpec::new(2, 10, 8, 3, 4)).unwrap();
        let rec = split_as_recording(&ds, Split::Val, 30.0).unwrap();
        let text = recording_to_csv(&rec);
        let back = parse_recording_csv(&text, Path::new("v.csv"), &CsvSchema::default()).unwrap();
        let windows = make_windows(&back, 8, 0.0).unwrap();
        let orig = ds.split_windows(Split::Val);
        assert_eq!(windows.len(), orig.len());
        for (a, b) in windows.iter().zip(orig) {
            assert_eq!(a.label, b.label);
            // 9 significant digits
            assert!((&a.values - &b.values).iter().all(|d| d.abs() < 1e-7));
        }
    }

    proptest! {
        #[test]
        fn window_starts_are_arithmetic(n in 1usize..300, t in 1usize..60, ov in 0.0f64..0.95) {
            prop_assume!(t <= n);
            let r = rec(n, 1);
            let w = make_windows(&r, t, ov).unwrap();
            let stride = window_stride(t, ov);
            for (k, win) in w.iter().enumerate() {
                prop_assert_eq!(win.values[[0, 0]] as usize, k * stride);
                prop_assert!(k * stride + t <= n);
            }
            prop_assert!(w.len() * stride + t > n);
        }

        #[test]
        fn normalization_is_idempotent(seed in 0u64..50) {
            let ds = generate_synthetic(&SyntheticSpec::new(2, 10, 12, 3, seed)).unwrap();
            let once = normalize_channels(&ds).unwrap();
            let twice = normalize_channels(&once).unwrap();
            for (a, b) in once.windows.iter().zip(&twice.windows) {
                prop_assert!((&a.values - &b.values).iter().all(|d| d.abs() < 1e-6));
            }
            let stats = ChannelStats::from_train(&once).unwrap();
            prop_assert!(stats.mean.iter().all(|m| m.abs() < 1e-6));
            prop_assert!(stats.std.iter().all(|s| (s - 1.0).abs() < 1e-3));
        }

        #[test]
        fn subset_is_subset_of_train(k in 1usize..6, seed in 0u64..100) {
            let ds = generate_synthetic(&SyntheticSpec::new(3, 20, 6, 3, 9)).unwrap();
            let s = select_labeled_subset(&ds, SubsetMode::PerClass(k), seed).unwrap();
            let train: Vec<&TimeWindow> = ds.split_windows(Split::Train);
            for w in s.split_windows(Split::Train) {
                prop_assert!(train.iter().any(|t| *t == w));
            }
            prop_assert_eq!(s.class_counts(Split::Train), vec![k; 3]);
        }
    }
}
