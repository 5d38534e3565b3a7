use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::augment::{augment_or_identity, AugmentationSpec};
use crate::data::{Split, TimeWindow, WindowedDataset};
use crate::error::{Error, Result};
use crate::linalg::l2_normalize_rows;
use crate::output::{matrix_to_csv, matrix_to_pgm, write_text};
use crate::rng::RngState;
use crate::softdtw::{hard_dtw, pairwise_sq_distances, softdtw_grad, softdtw_value, CostMatrix, SoftAlignmentMatrix};

use super::FrozenEncoder;

const KEY_TRIPLETS: u64 = 0x7a;
const KEY_VIEWS: u64 = 0x7b;

/// Distances between row-normalised features of two windows and the soft
/// alignment between them.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub distances: CostMatrix,
    pub alignment: SoftAlignmentMatrix,
    pub softdtw: f64,
}

fn normalized_distances(
    enc_a: &FrozenEncoder,
    a: ArrayView2<'_, f64>,
    enc_b: &FrozenEncoder,
    b: ArrayView2<'_, f64>,
) -> Result<CostMatrix> {
    let (ha, _) = l2_normalize_rows(enc_a.encode(a)?.view());
    let (hb, _) = l2_normalize_rows(enc_b.encode(b)?.view());
    pairwise_sq_distances(ha.view(), hb.view())
}

/// Encodes each window with its stream's encoder and aligns the two
/// feature sequences.
pub fn alignment_between(
    enc_a: &FrozenEncoder,
    a: ArrayView2<'_, f64>,
    enc_b: &FrozenEncoder,
    b: ArrayView2<'_, f64>,
    gamma: f64,
) -> Result<Alignment> {
    let distances = normalized_distances(enc_a, a, enc_b, b)?;
    let (softdtw, table) = softdtw_value(&distances, gamma)?;
    let alignment = softdtw_grad(&distances, &table, gamma)?;
    Ok(Alignment {
        distances,
        alignment,
        softdtw,
    })
}

pub fn alignment_heatmap(encoder: &FrozenEncoder, w1: &TimeWindow, w2: &TimeWindow, gamma: f64) -> Result<Alignment> {
    alignment_between(encoder, w1.values.view(), encoder, w2.values.view(), gamma)
}

/// Writes `<stem>_distances.{csv,pgm}` and `<stem>_alignment.{csv,pgm}`.
pub fn write_alignment(dir: &Path, stem: &str, al: &Alignment) -> Result<()> {
    write_text(
        &dir.join(format!("{stem}_distances.csv")),
        &matrix_to_csv(al.distances.0.view()),
    )?;
    write_text(
        &dir.join(format!("{stem}_distances.pgm")),
        &matrix_to_pgm(al.distances.0.view()),
    )?;
    write_text(
        &dir.join(format!("{stem}_alignment.csv")),
        &matrix_to_csv(al.alignment.0.view()),
    )?;
    write_text(
        &dir.join(format!("{stem}_alignment.pgm")),
        &matrix_to_pgm(al.alignment.0.view()),
    )
}

/// Mean cost along the optimal hard-DTW path: the per-timestep distance
/// between two sequences once they are aligned.
pub fn path_mean_distance(d: &CostMatrix) -> Result<f64> {
    let (cost, path) = hard_dtw(d)?;
    Ok(cost / path.len() as f64)
}

/// How the positive of a triplet is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositiveKind {
    /// An augmented view of the anchor itself.
    AugmentedView,
    /// Another window of the anchor's class.
    SameClass,
}

impl PositiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PositiveKind::AugmentedView => "view",
            PositiveKind::SameClass => "class",
        }
    }
}

impl fmt::Display for PositiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PositiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "view" => Ok(PositiveKind::AugmentedView),
            "class" => Ok(PositiveKind::SameClass),
            other => Err(Error::InvalidArgument(format!(
                "unknown positive kind `{other}`, expected view or class"
            ))),
        }
    }
}

/// Dataset indices of an (anchor, positive, negative) triplet. For
/// augmented-view positives `positive == anchor`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Draws `n` triplets from `split`: the negative always has a different
/// class from the anchor.
pub fn sample_triplets(
    ds: &WindowedDataset,
    split: Split,
    n: usize,
    kind: PositiveKind,
    seed: u64,
) -> Result<Vec<Triplet>> {
    let pool = ds.indices(split);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for &i in &pool {
        let label = ds.windows[i]
            .label
            .ok_or_else(|| Error::InvalidArgument(format!("window {i} has no label")))?;
        by_class[label].push(i);
    }
    let populated = by_class.iter().filter(|c| !c.is_empty()).count();
    if populated < 2 {
        return Err(Error::InvalidArgument(format!(
            "split {split} needs windows of at least 2 classes"
        )));
    }
    if kind == PositiveKind::SameClass && by_class.iter().all(|c| c.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "split {split} has no class with 2 windows"
        )));
    }
    let mut rng = RngState::derive(seed, &[KEY_TRIPLETS]);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let anchor = pool[rng.int_inclusive(0, pool.len() - 1)];
        let class = ds.windows[anchor].label.expect("checked");
        let same = &by_class[class];
        let positive = match kind {
            PositiveKind::AugmentedView => anchor,
            PositiveKind::SameClass => {
                if same.len() < 2 {
                    continue;
                }
                loop {
                    let p = same[rng.int_inclusive(0, same.len() - 1)];
                    if p != anchor {
                        break p;
                    }
                }
            }
        };
        let negative = loop {
            let c = pool[rng.int_inclusive(0, pool.len() - 1)];
            if ds.windows[c].label != Some(class) {
                break c;
            }
        };
        out.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletReport {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl TripletReport {
    /// Triplets whose positive distance is strictly below the negative one.
    pub fn wins(&self) -> usize {
        self.positive.iter().zip(&self.negative).filter(|(p, n)| p < n).count()
    }

    pub fn win_rate(&self) -> f64 {
        if self.positive.is_empty() {
            0.0
        } else {
            self.wins() as f64 / self.positive.len() as f64
        }
    }
}

/// Path-mean normalised feature distance of anchor–positive and
/// anchor–negative pairs. Augmented-view positives are drawn with
/// `augment` (one view of the anchor against the raw anchor).
pub fn triplet_alignment_check(
    encoder: &FrozenEncoder,
    ds: &WindowedDataset,
    triplets: &[Triplet],
    kind: PositiveKind,
    augment: &[AugmentationSpec],
    seed: u64,
) -> Result<TripletReport> {
    let mut report = TripletReport {
        positive: Vec::with_capacity(triplets.len()),
        negative: Vec::with_capacity(triplets.len()),
    };
    for (k, t) in triplets.iter().enumerate() {
        let anchor = &ds.windows[t.anchor];
        let positive = match kind {
            PositiveKind::AugmentedView => {
                let mut rng = RngState::derive(seed, &[KEY_VIEWS, k as u64]);
                augment_or_identity(anchor, augment, &mut rng)?
            }
            PositiveKind::SameClass => ds.windows[t.positive].clone(),
        };
        let negative = &ds.windows[t.negative];
        let dp = normalized_distances(encoder, anchor.values.view(), encoder, positive.values.view())?;
        let dn = normalized_distances(encoder, anchor.values.view(), encoder, negative.values.view())?;
        report.positive.push(path_mean_distance(&dp)?);
        report.negative.push(path_mean_distance(&dn)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::nn::EncoderConfig;
    use crate::train::ContrastiveModel;

    fn setup() -> (FrozenEncoder, WindowedDataset) {
        let ds = generate_synthetic(&SyntheticSpec::new(3, 20, 16, 3, 4)).unwrap();
        let cfg = EncoderConfig {
            hidden: 6,
            layers: 2,
            ..EncoderConfig::new(3)
        };
        (
            ContrastiveModel::unimodal(&cfg, 1).unwrap().frozen_encoder(0).unwrap(),
            ds,
        )
    }

    #[test]
    fn self_alignment_has_zero_diagonal() {
        let (enc, ds) = setup();
        let al = alignment_heatmap(&enc, &ds.windows[0], &ds.windows[0], 0.1).unwrap();
        assert_eq!(al.distances.dim(), (16, 16));
        for t in 0..16 {
            assert!(al.distances.0[[t, t]].abs() < 1e-12);
        }
        assert!(path_mean_distance(&al.distances).unwrap().abs() < 1e-12);
    }

    #[test]
    fn files_written() {
        let (enc, ds) = setup();
        let al = alignment_heatmap(&enc, &ds.windows[0], &ds.windows[1], 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_alignment(dir.path(), "pair", &al).unwrap();
        for f in [
            "pair_distances.csv",
            "pair_distances.pgm",
            "pair_alignment.csv",
            "pair_alignment.pgm",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let pgm = std::fs::read_to_string(dir.path().join("pair_distances.pgm")).unwrap();
        assert!(pgm.starts_with("P2\n16 16\n255\n"));
    }

    #[test]
    fn triplets_respect_classes() {
        let (_, ds) = setup();
        for kind in [PositiveKind::AugmentedView, PositiveKind::SameClass] {
            let ts = sample_triplets(&ds, Split::Test, 30, kind, 2).unwrap();
            assert_eq!(ts.len(), 30);
            for t in ts {
                let l = ds.windows[t.anchor].label;
                assert_eq!(ds.windows[t.positive].label, l);
                assert_ne!(ds.windows[t.negative].label, l);
                assert_eq!(kind == PositiveKind::AugmentedView, t.positive == t.anchor);
            }
        }
    }

    #[test]
    fn identity_view_always_wins() {
        let (enc, ds) = setup();
        let ts = sample_triplets(&ds, Split::Test, 10, PositiveKind::AugmentedView, 0).unwrap();
        let r = triplet_alignment_check(&enc, &ds, &ts, PositiveKind::AugmentedView, &[], 0).unwrap();
        assert!(r.positive.iter().all(|&p| p.abs() < 1e-12));
        assert_eq!(r.wins(), 10);
    }
}
