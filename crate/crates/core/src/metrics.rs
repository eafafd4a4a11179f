//! Confusion matrices, accuracy, macro-F1 and comparison reports.
//!
//! Confusion matrices are stored rows = true activity, columns = predicted
//! activity, both in canonical label order.

use std::fmt::Write as _;

use crate::dataset::{ActivityLabel, NUM_CLASSES};
use crate::error::{HarError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    /// Build from a matrix laid out rows = predicted, columns = true.
    pub fn from_transposed(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        let mut t = [[0; NUM_CLASSES]; NUM_CLASSES];
        for (i, row) in counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                t[j][i] = v;
            }
        }
        ConfusionMatrix { counts: t }
    }

    pub fn get(&self, truth: ActivityLabel, predicted: ActivityLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_counts(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn predicted_counts(&self) -> [u64; NUM_CLASSES] {
        let mut out = [0; NUM_CLASSES];
        for row in &self.counts {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// CSV with a header row; `transposed` prints rows = predicted instead.
    pub fn to_csv(&self, transposed: bool) -> String {
        let corner = if transposed { "predicted\\true" } else { "true\\predicted" };
        let mut s = String::from(corner);
        for l in ActivityLabel::ALL {
            s.push(',');
            s.push_str(l.name());
        }
        s.push('\n');
        for r in ActivityLabel::ALL {
            s.push_str(r.name());
            for c in ActivityLabel::ALL {
                let v = if transposed { self.get(c, r) } else { self.get(r, c) };
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Aligned plain-text rendering in both orientations.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for transposed in [false, true] {
            let title = if transposed {
                "rows = predicted, columns = true"
            } else {
                "rows = true, columns = predicted"
            };
            let _ = writeln!(s, "{title}");
            let _ = write!(s, "{:>12}", "");
            for l in ActivityLabel::ALL {
                let _ = write!(s, "{:>11}", l.name());
            }
            s.push('\n');
            for r in ActivityLabel::ALL {
                let _ = write!(s, "{:>12}", r.name());
                for c in ActivityLabel::ALL {
                    let v = if transposed { self.get(c, r) } else { self.get(r, c) };
                    let _ = write!(s, "{v:>11}");
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion_matrix(predictions: &[ActivityLabel], truths: &[ActivityLabel]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(HarError::invalid(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (p, t) in predictions.iter().zip(truths) {
        counts[t.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(HarError::invalid("confusion matrix is empty"));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Unweighted mean of per-class F1 over classes that occur as a truth or a
/// prediction. A class with precision + recall = 0 contributes 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(HarError::invalid("confusion matrix is empty"));
    }
    let truth = cm.true_counts();
    let pred = cm.predicted_counts();
    let mut sum = 0.0;
    let mut classes = 0usize;
    for k in 0..NUM_CLASSES {
        if truth[k] == 0 && pred[k] == 0 {
            continue;
        }
        classes += 1;
        let tp = cm.counts[k][k] as f64;
        let precision = if pred[k] > 0 { tp / pred[k] as f64 } else { 0.0 };
        let recall = if truth[k] > 0 { tp / truth[k] as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(sum / classes as f64)
}

/// Reported accuracy / F1 of the reference models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceResult {
    pub name: &'static str,
    pub accuracy: f64,
    pub f1: Option<f64>,
}

pub const REFERENCE_RESULTS: [ReferenceResult; 7] = [
    ReferenceResult { name: "CNN", accuracy: 0.919, f1: Some(0.92) },
    ReferenceResult { name: "LSTM", accuracy: 0.892, f1: Some(0.89) },
    ReferenceResult { name: "Baseline-A", accuracy: 0.89, f1: None },
    ReferenceResult { name: "Baseline-B", accuracy: 0.893, f1: None },
    ReferenceResult { name: "Baseline-C", accuracy: 0.962, f1: None },
    ReferenceResult { name: "CNN-LSTM", accuracy: 0.951, f1: Some(0.95) },
    ReferenceResult { name: "Fusion", accuracy: 0.961, f1: Some(0.96) },
];

pub fn reference(name: &str) -> Option<&'static ReferenceResult> {
    REFERENCE_RESULTS.iter().find(|r| r.name.eq_ignore_ascii_case(name))
}

/// Confusion matrix of the fusion ensemble on the UCI HAR test split as
/// reported alongside the reference results (rows = true, columns = predicted).
pub const REFERENCE_FUSION_CONFUSION: [[u64; NUM_CLASSES]; NUM_CLASSES] = [
    [487, 6, 3, 0, 0, 0],
    [1, 468, 2, 0, 0, 0],
    [0, 13, 407, 0, 0, 0],
    [0, 2, 0, 431, 58, 0],
    [0, 0, 0, 29, 503, 0],
    [0, 0, 0, 0, 0, 537],
];

/// Same, for the plain CNN-LSTM.
pub const REFERENCE_CNN_LSTM_CONFUSION: [[u64; NUM_CLASSES]; NUM_CLASSES] = [
    [493, 3, 0, 0, 0, 0],
    [3, 466, 2, 0, 0, 0],
    [3, 18, 398, 0, 1, 0],
    [0, 1, 0, 421, 69, 0],
    [0, 0, 0, 42, 490, 0],
    [0, 0, 0, 0, 1, 536],
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub accuracy: f64,
    pub f1: f64,
    pub reference: Option<ReferenceResult>,
    pub accuracy_delta: Option<f64>,
    pub f1_delta: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub tolerance: f64,
    pub rows: Vec<ReportRow>,
}

/// Pair each named result with its reference (matched by name, case
/// insensitive) and flag deltas whose magnitude exceeds `tolerance`.
pub fn compare_report(results: &[(&str, f64, f64)], tolerance: f64) -> Result<ComparisonReport> {
    if results.is_empty() {
        return Err(HarError::invalid("report needs at least one result"));
    }
    let mut rows = Vec::with_capacity(results.len());
    for &(name, acc, f1) in results {
        if name.trim().is_empty() {
            return Err(HarError::invalid("result name is empty"));
        }
        let reference = reference(name).copied();
        let accuracy_delta = reference.map(|r| acc - r.accuracy);
        let f1_delta = reference.and_then(|r| r.f1).map(|r| f1 - r);
        // Small epsilon so a delta printed as the tolerance is not flagged by rounding noise.
        let flagged = [accuracy_delta, f1_delta]
            .iter()
            .flatten()
            .any(|d| d.abs() > tolerance + 1e-12);
        rows.push(ReportRow {
            name: name.to_string(),
            accuracy: acc,
            f1,
            reference,
            accuracy_delta,
            f1_delta,
            flagged,
        });
    }
    Ok(ComparisonReport { tolerance, rows })
}

fn fmt_opt(v: Option<f64>, signed: bool) -> String {
    match (v, signed) {
        (Some(v), true) => format!("{v:+.3}"),
        (Some(v), false) => format!("{v:.3}"),
        (None, _) => "n/a".into(),
    }
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}  flag (tol {:.3})",
            "model", "acc", "ref", "delta", "f1", "ref", "delta", self.tolerance
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14}{:>9.3}{:>9}{:>9}{:>9.3}{:>9}{:>9}  {}",
                r.name,
                r.accuracy,
                fmt_opt(r.reference.map(|x| x.accuracy), false),
                fmt_opt(r.accuracy_delta, true),
                r.f1,
                fmt_opt(r.reference.and_then(|x| x.f1), false),
                fmt_opt(r.f1_delta, true),
                if r.flagged { "*" } else { "" }
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,accuracy,ref_accuracy,accuracy_delta,f1,ref_f1,f1_delta,flagged\n");
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6},{},{},{:.6},{},{},{}",
                r.name,
                r.accuracy,
                opt(r.reference.map(|x| x.accuracy)),
                opt(r.accuracy_delta),
                r.f1,
                opt(r.reference.and_then(|x| x.f1)),
                opt(r.f1_delta),
                r.flagged
            );
        }
        s
    }
}
