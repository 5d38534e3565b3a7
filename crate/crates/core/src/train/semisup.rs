use std::fmt::Write as _;

use crate::data::{labeled_subset_indices, Split, SubsetMode, WindowedDataset};
use crate::error::{Error, Result};
use crate::output::fmt_g9;
use crate::rng::RngState;

use super::finetune::{evaluate_classifier, extract_features, fit_classifier, FinetuneConfig, LabeledFeatures};
use super::FrozenEncoder;

const KEY_RUN: u64 = 0x5e;

/// Scores of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SemisupRow {
    pub mode: SubsetMode,
    pub scores: Vec<f64>,
    pub mean_f1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean and normal-approximation 95% interval `mean ± 1.96·sd/√n`, with
/// the sample standard deviation.
pub fn confidence_interval(scores: &[f64]) -> Result<(f64, f64, f64)> {
    if scores.len() < 2 {
        return Err(Error::InvalidArgument(
            "a confidence interval needs at least 2 scores".into(),
        ));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * var.sqrt() / n.sqrt();
    Ok((mean, mean - half, mean + half))
}

/// For every grid point, `repeats` times: draw a labelled training subset
/// with its own derived seed, fit a classifier on the frozen features and
/// score it on the test split. Runs are spread over `jobs` threads; the
/// result does not depend on `jobs`.
pub fn semi_supervised_protocol(
    encoders: &[&FrozenEncoder],
    datasets: &[&WindowedDataset],
    grid: &[SubsetMode],
    repeats: usize,
    cfg: &FinetuneConfig,
    seed: u64,
    jobs: usize,
) -> Result<Vec<SemisupRow>> {
    if repeats < 2 {
        return Err(Error::InvalidArgument("repeats must be at least 2".into()));
    }
    let ds = *datasets
        .first()
        .ok_or_else(|| Error::InvalidArgument("no dataset given".into()))?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let features = extract_features(encoders, datasets, &all, cfg.pooling)?;
    let test = features.select(&ds.indices(Split::Test));

    let runs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..repeats).map(move |r| (g, r)))
        .collect();
    let run_one = |&(g, r): &(usize, usize)| -> Result<f64> {
        let run_seed = RngState::derive(seed, &[KEY_RUN, g as u64, r as u64]).next_seed();
        let rows = labeled_subset_indices(ds, grid[g], run_seed)?;
        let train: LabeledFeatures = features.select(&rows);
        let run_cfg = FinetuneConfig {
            seed: run_seed,
            ..cfg.clone()
        };
        let (clf, _) = fit_classifier(&train, ds.num_classes, &run_cfg)?;
        Ok(evaluate_classifier(&clf, &test)?.macro_f1)
    };

    let jobs = jobs.clamp(1, runs.len().max(1));
    let scores: Vec<Result<f64>> = if jobs == 1 {
        runs.iter().map(run_one).collect()
    } else {
        let mut slots: Vec<Option<Result<f64>>> = (0..runs.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|t| {
                    let runs = &runs;
                    let run_one = &run_one;
                    scope.spawn(move || {
                        (t..runs.len())
                            .step_by(jobs)
                            .map(|i| (i, run_one(&runs[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, s) in h.join().expect("semi-supervised worker panicked") {
                    slots[i] = Some(s);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every run scored")).collect()
    };

    let scores = scores.into_iter().collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::with_capacity(grid.len());
    for (g, chunk) in scores.chunks(repeats).enumerate() {
        let (mean_f1, ci_low, ci_high) = confidence_interval(chunk)?;
        rows.push(SemisupRow {
            mode: grid[g],
            scores: chunk.to_vec(),
            mean_f1,
            ci_low,
            ci_high,
        });
    }
    Ok(rows)
}

/// `k_or_p,mean_f1,ci_low,ci_high,repeats`.
pub fn semisup_csv(rows: &[SemisupRow]) -> String {
    let mut out = String::from("k_or_p,mean_f1,ci_low,ci_high,repeats\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.mode,
            fmt_g9(r.mean_f1),
            fmt_g9(r.ci_low),
            fmt_g9(r.ci_high),
            r.scores.len()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::nn::EncoderConfig;
    use crate::train::ContrastiveModel;

    fn setup() -> (FrozenEncoder, WindowedDataset) {
        let ds = generate_synthetic(&SyntheticSpec::new(3, 30, 16, 3, 0)).unwrap();
        let cfg = EncoderConfig {
            hidden: 8,
            layers: 1,
            ..EncoderConfig::new(3)
        };
        (
            ContrastiveModel::unimodal(&cfg, 0).unwrap().frozen_encoder(0).unwrap(),
            ds,
        )
    }

    #[test]
    fn grid_counts_and_thread_independence() {
        let (enc, ds) = setup();
        let grid = [
            SubsetMode::PerClass(1),
            SubsetMode::PerClass(2),
            SubsetMode::Fraction(0.5),
        ];
        let cfg = FinetuneConfig {
            epochs: 3,
            ..FinetuneConfig::default()
        };
        let one = semi_supervised_protocol(&[&enc], &[&ds], &grid, 3, &cfg, 7, 1).unwrap();
        let many = semi_supervised_protocol(&[&enc], &[&ds], &grid, 3, &cfg, 7, 4).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.len(), 3);
        assert!(one.iter().all(|r| r.scores.len() == 3));
        let csv = semisup_csv(&one);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().starts_with("0.5,"));
    }

    #[test]
    fn interval_shrinks_with_repeats() {
        let base = [0.6, 0.7, 0.65, 0.75, 0.55, 0.7, 0.6, 0.65, 0.7, 0.64];
        let ten = confidence_interval(&base).unwrap();
        let forty: Vec<f64> = base.iter().cycle().take(40).copied().collect();
        let forty = confidence_interval(&forty).unwrap();
        assert!(forty.2 - forty.1 < ten.2 - ten.1);
        let (m, lo, hi) = confidence_interval(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((hi - m - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12 && (m - lo - (hi - m)).abs() < 1e-12);
    }

    #[test]
    fn too_few_repeats() {
        let (enc, ds) = setup();
        assert!(semi_supervised_protocol(
            &[&enc],
            &[&ds],
            &[SubsetMode::PerClass(1)],
            1,
            &FinetuneConfig::default(),
            0,
            1
        )
        .is_err());
    }
}
