//! Column occlusion: zero one sensor column of every test window and
//! measure how often each activity is still recognised.

use std::fmt::Write as _;

use crate::dataset::{ActivityLabel, LabeledDataset, SensorMatrix, SignalWindow, CHANNELS, NUM_CLASSES, WINDOW_LEN};
use crate::error::{HarError, Result};
use crate::model::{predict_batch, TrainedModel};
use crate::scalar::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.60;
pub const DEFAULT_MAX_COLUMNS: usize = 2;

/// Published retention fractions, `[activity][column]` in canonical order.
pub const REFERENCE_RETENTION: [[f64; CHANNELS]; NUM_CLASSES] = [
    [0.99, 0.98, 0.99, 0.19, 0.54, 0.60, 0.94, 0.96, 0.99],
    [0.28, 0.98, 0.96, 0.84, 0.96, 0.97, 0.97, 0.46, 0.96],
    [0.04, 1.00, 1.00, 0.76, 0.89, 0.94, 0.95, 1.00, 0.96],
    [0.99, 0.96, 0.95, 1.00, 0.83, 0.97, 0.09, 0.90, 0.96],
    [0.99, 1.00, 1.00, 0.39, 1.00, 0.99, 0.52, 0.86, 0.98],
    [1.00, 1.00, 1.00, 0.99, 1.00, 1.00, 1.00, 0.89, 0.92],
];

/// Sample counts printed with [`REFERENCE_RETENTION`]; these differ from the
/// per-class test totals and are kept for comparison only.
pub const REFERENCE_SAMPLE_COUNTS: [usize; NUM_CLASSES] = [477, 435, 364, 411, 475, 535];

/// Published per-activity significant columns.
pub const REFERENCE_SIGNIFICANT_COLUMNS: [&[usize]; NUM_CLASSES] =
    [&[3, 4], &[0, 7], &[0, 6], &[6], &[3, 6], &[7, 8]];

/// Copy of `window` with `column` set to zero.
pub fn occlude_column(window: &SignalWindow, column: usize) -> Result<SignalWindow> {
    if column >= CHANNELS {
        return Err(HarError::invalid(format!("column {column} out of range 0..{CHANNELS}")));
    }
    let mut data = window.data().to_vec();
    for t in 0..WINDOW_LEN {
        data[t * CHANNELS + column] = 0.0;
    }
    SignalWindow::new(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionReport {
    pub sample_counts: [usize; NUM_CLASSES],
    /// Fraction still classified correctly, `[activity][occluded column]`.
    pub retention: [[f64; CHANNELS]; NUM_CLASSES],
    /// Per-class accuracy with nothing occluded.
    pub baseline: [f64; NUM_CLASSES],
    pub model_id: String,
}

impl OcclusionReport {
    /// Wrap externally supplied numbers (e.g. the published table).
    pub fn from_retention(
        sample_counts: [usize; NUM_CLASSES],
        retention: [[f64; CHANNELS]; NUM_CLASSES],
        model_id: impl Into<String>,
    ) -> Result<Self> {
        if retention.iter().flatten().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(HarError::invalid("retention entries must lie in [0, 1]"));
        }
        if sample_counts.contains(&0) {
            return Err(HarError::invalid("sample counts must be positive"));
        }
        Ok(OcclusionReport {
            sample_counts,
            retention,
            baseline: [f64::NAN; NUM_CLASSES],
            model_id: model_id.into(),
        })
    }

    pub fn reference() -> Self {
        // Constants satisfy the invariants checked above.
        Self::from_retention(REFERENCE_SAMPLE_COUNTS, REFERENCE_RETENTION, "reference").unwrap()
    }

    pub fn get(&self, activity: ActivityLabel, column: usize) -> f64 {
        self.retention[activity.index()][column]
    }

    /// Retention percentages laid out one row per occluded column, one
    /// column per activity.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for l in ActivityLabel::ALL {
            let _ = write!(s, ",{}", l.name());
        }
        s.push_str("\nsamples");
        for n in self.sample_counts {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
        for c in 0..CHANNELS {
            let _ = write!(s, "column_{c}");
            for a in 0..NUM_CLASSES {
                let _ = write!(s, ",{:.2}", 100.0 * self.retention[a][c]);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("occlusion retention (%), model {}\n", self.model_id);
        let _ = write!(s, "{:<10}", "");
        for l in ActivityLabel::ALL {
            let _ = write!(s, "{:>11}", l.name());
        }
        let _ = write!(s, "\n{:<10}", "samples");
        for n in self.sample_counts {
            let _ = write!(s, "{n:>11}");
        }
        if self.baseline.iter().all(|b| b.is_finite()) {
            let _ = write!(s, "\n{:<10}", "clean");
            for b in self.baseline {
                let _ = write!(s, "{:>10.1}%", 100.0 * b);
            }
        }
        s.push('\n');
        for c in 0..CHANNELS {
            let _ = write!(s, "{:<10}", format!("column {c}"));
            for a in 0..NUM_CLASSES {
                let _ = write!(s, "{:>10.1}%", 100.0 * self.retention[a][c]);
            }
            s.push('\n');
        }
        s
    }
}

/// Retention of every (activity, column) pair for a nine-column model.
/// The denominator is every test window of the activity.
pub fn occlusion_report<S: Scalar>(model: &TrainedModel<S>, test_set: &LabeledDataset) -> Result<OcclusionReport> {
    if !model.column_subset().is_all() {
        return Err(HarError::invalid("occlusion needs a model trained on all nine columns"));
    }
    let counts = test_set.class_counts();
    if let Some(k) = counts.iter().position(|&n| n == 0) {
        return Err(HarError::invalid(format!(
            "test set has no {} windows",
            ActivityLabel::ALL[k]
        )));
    }
    let labels = test_set.labels();
    let score = |inputs: Vec<SignalWindow>| -> Result<[usize; NUM_CLASSES]> {
        let refs: Vec<&SensorMatrix> = inputs.iter().map(|w| w.as_matrix()).collect();
        let mut kept = [0usize; NUM_CLASSES];
        for ((pred, _), truth) in predict_batch(model, &refs)?.into_iter().zip(labels) {
            if pred == *truth {
                kept[truth.index()] += 1;
            }
        }
        Ok(kept)
    };

    let clean = score(test_set.windows().to_vec())?;
    let mut retention = [[0.0; CHANNELS]; NUM_CLASSES];
    for c in 0..CHANNELS {
        let occluded = test_set
            .windows()
            .iter()
            .map(|w| occlude_column(w, c))
            .collect::<Result<Vec<_>>>()?;
        let kept = score(occluded)?;
        for a in 0..NUM_CLASSES {
            retention[a][c] = kept[a] as f64 / counts[a] as f64;
        }
    }
    let mut baseline = [0.0; NUM_CLASSES];
    for a in 0..NUM_CLASSES {
        baseline[a] = clean[a] as f64 / counts[a] as f64;
    }
    Ok(OcclusionReport {
        sample_counts: counts,
        retention,
        baseline,
        model_id: format!("{}-d{}-seed{}", model.config.arch, model.config.conv_depth, model.config.seed),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificantColumns {
    /// Per activity, most significant (lowest retention) column first.
    pub per_activity: [Vec<usize>; NUM_CLASSES],
    pub threshold: f64,
}

impl SignificantColumns {
    pub fn get(&self, activity: ActivityLabel) -> &[usize] {
        &self.per_activity[activity.index()]
    }

    /// Activities whose set equals `reference` as a set.
    pub fn agreement(&self, reference: &[&[usize]; NUM_CLASSES]) -> Vec<ActivityLabel> {
        ActivityLabel::ALL
            .into_iter()
            .filter(|a| {
                let mut mine = self.get(*a).to_vec();
                mine.sort_unstable();
                let mut theirs = reference[a.index()].to_vec();
                theirs.sort_unstable();
                mine == theirs
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("significant columns (retention < {:.2})\n", self.threshold);
        for a in ActivityLabel::ALL {
            let cols: Vec<String> = self.get(a).iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{:<11}{}", a.name(), if cols.is_empty() { "-".into() } else { cols.join(",") });
        }
        s
    }
}

/// Columns whose occlusion drops retention below `threshold`, lowest
/// retention first (ties by column index), at most `max_columns` each.
/// A threshold of 1.0 or more selects every column.
pub fn derive_significant_columns(
    report: &OcclusionReport,
    threshold: f64,
    max_columns: usize,
) -> Result<SignificantColumns> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(HarError::invalid(format!("threshold {threshold} not in (0, 1]")));
    }
    if !(1..=CHANNELS).contains(&max_columns) {
        return Err(HarError::invalid(format!("max_columns {max_columns} not in 1..=9")));
    }
    let per_activity = std::array::from_fn(|a| {
        let row = &report.retention[a];
        let mut cols: Vec<usize> = (0..CHANNELS)
            .filter(|&c| threshold >= 1.0 || row[c] < threshold)
            .collect();
        cols.sort_by(|&x, &y| row[x].total_cmp(&row[y]).then(x.cmp(&y)));
        cols.truncate(max_columns);
        cols
    });
    Ok(SignificantColumns {
        per_activity,
        threshold,
    })
}
