use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::output::fmt_g9;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Classification metrics of one evaluation, plus the classifier's
/// per-epoch training loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub train_loss: Vec<f64>,
    pub seed: u64,
}

/// Per-class precision, recall and F1 with 0 for undefined ratios; macro-F1
/// is the unweighted mean over all `num_classes` classes.
pub fn evaluate_macro_f1(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("num_classes must be positive".into()));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {} outside [0, {num_classes})",
                t.max(p)
            )));
        }
        confusion[t][p] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / num_classes as f64;
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        macro_f1,
        accuracy: ratio(correct, y_true.len()),
        per_class,
        confusion,
        train_loss: Vec::new(),
        seed: 0,
    })
}

impl MetricsReport {
    /// `epoch,train_loss`, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss\n");
        for (e, l) in self.train_loss.iter().enumerate() {
            let _ = writeln!(out, "{},{}", e + 1, fmt_g9(*l));
        }
        out
    }

    /// `class,precision,recall,f1,support` rows followed by a `macro` row
    /// (unweighted means, total support).
    pub fn class_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(
                out,
                "{c},{},{},{},{}",
                fmt_g9(m.precision),
                fmt_g9(m.recall),
                fmt_g9(m.f1),
                m.support
            );
        }
        let k = self.per_class.len().max(1) as f64;
        let _ = writeln!(
            out,
            "macro,{},{},{},{}",
            fmt_g9(self.per_class.iter().map(|m| m.precision).sum::<f64>() / k),
            fmt_g9(self.per_class.iter().map(|m| m.recall).sum::<f64>() / k),
            fmt_g9(self.macro_f1),
            self.per_class.iter().map(|m| m.support).sum::<usize>()
        );
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "macro_f1 {}", fmt_g9(self.macro_f1));
        let _ = writeln!(out, "accuracy {}", fmt_g9(self.accuracy));
        let _ = writeln!(out, "class,precision,recall,f1,support");
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(
                out,
                "{c},{},{},{},{}",
                fmt_g9(m.precision),
                fmt_g9(m.recall),
                fmt_g9(m.f1),
                m.support
            );
        }
        let _ = writeln!(out, "confusion (rows true, columns predicted)");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = evaluate_macro_f1(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn hand_computed_example() {
        let r = evaluate_macro_f1(&[0, 0, 1, 1], &[0, 0, 1, 0], 2).unwrap();
        assert!((r.per_class[0].f1 - 0.8).abs() < 1e-12);
        assert!((r.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.macro_f1 - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((r.macro_f1 - 0.7333).abs() < 1e-4);
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let r = evaluate_macro_f1(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let r = evaluate_macro_f1(&[0, 1], &[0, 1], 3).unwrap();
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_rows_sum_to_support() {
        let t = [0, 2, 1, 1, 0, 2, 2];
        let p = [1, 2, 1, 0, 0, 2, 1];
        let r = evaluate_macro_f1(&t, &p, 3).unwrap();
        for (c, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), t.iter().filter(|&&l| l == c).count());
            assert_eq!(r.per_class[c].support, row.iter().sum::<usize>());
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(evaluate_macro_f1(&[0, 3], &[0, 1], 3).is_err());
        assert!(evaluate_macro_f1(&[0], &[0, 1], 3).is_err());
    }
}
