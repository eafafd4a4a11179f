//! Sensor windows, activity labels, the UCI HAR loader and synthetic corpora.
//!
//! A window is 128 time steps of nine inertial channels. Column order is
//! fixed (body acceleration, gyroscope, total acceleration; x/y/z each) and
//! every column index used elsewhere in the crate refers to this order.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::rng::{rng_from, stream};

pub const WINDOW_LEN: usize = 128;
pub const CHANNELS: usize = 9;
pub const NUM_CLASSES: usize = 6;

/// Degenerate channel deviations below this are clamped to 1.
pub const MIN_STDDEV: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityLabel {
    Walking,
    Upstairs,
    Downstairs,
    Sitting,
    Standing,
    Lying,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; NUM_CLASSES] = [
        ActivityLabel::Walking,
        ActivityLabel::Upstairs,
        ActivityLabel::Downstairs,
        ActivityLabel::Sitting,
        ActivityLabel::Standing,
        ActivityLabel::Lying,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Label as written in `y_train.txt` / `y_test.txt` (1..=6).
    pub fn raw(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_raw(raw: i64) -> Option<Self> {
        if (1..=NUM_CLASSES as i64).contains(&raw) {
            Self::from_index(raw as usize - 1)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::Walking => "Walking",
            ActivityLabel::Upstairs => "Upstairs",
            ActivityLabel::Downstairs => "Downstairs",
            ActivityLabel::Sitting => "Sitting",
            ActivityLabel::Standing => "Standing",
            ActivityLabel::Lying => "Lying",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Meaning of each of the nine columns of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    BodyAccX,
    BodyAccY,
    BodyAccZ,
    GyroX,
    GyroY,
    GyroZ,
    TotalAccX,
    TotalAccY,
    TotalAccZ,
}

impl Channel {
    pub const ALL: [Channel; CHANNELS] = [
        Channel::BodyAccX,
        Channel::BodyAccY,
        Channel::BodyAccZ,
        Channel::GyroX,
        Channel::GyroY,
        Channel::GyroZ,
        Channel::TotalAccX,
        Channel::TotalAccY,
        Channel::TotalAccZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Stem of the signal file under `Inertial Signals/`, without the split suffix.
    pub fn file_stem(self) -> &'static str {
        match self {
            Channel::BodyAccX => "body_acc_x",
            Channel::BodyAccY => "body_acc_y",
            Channel::BodyAccZ => "body_acc_z",
            Channel::GyroX => "body_gyro_x",
            Channel::GyroY => "body_gyro_y",
            Channel::GyroZ => "body_gyro_z",
            Channel::TotalAccX => "total_acc_x",
            Channel::TotalAccY => "total_acc_y",
            Channel::TotalAccZ => "total_acc_z",
        }
    }

    pub fn is_gyroscope(self) -> bool {
        matches!(self, Channel::GyroX | Channel::GyroY | Channel::GyroZ)
    }

    /// g for accelerometer channels, rad/s for the gyroscope.
    pub fn unit(self) -> &'static str {
        if self.is_gyroscope() {
            "rad/s"
        } else {
            "g"
        }
    }
}

/// A non-empty, strictly increasing set of column indices in `0..9`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ColumnSet(Vec<usize>);

impl ColumnSet {
    pub fn new(columns: Vec<usize>) -> Result<Self> {
        if columns.is_empty() {
            return Err(HarError::invalid("column set is empty"));
        }
        for (i, &c) in columns.iter().enumerate() {
            if c >= CHANNELS {
                return Err(HarError::invalid(format!(
                    "column {c} out of range 0..{CHANNELS}"
                )));
            }
            if i > 0 && columns[i - 1] >= c {
                return Err(HarError::invalid(format!(
                    "columns must be strictly increasing without duplicates, got {columns:?}"
                )));
            }
        }
        Ok(ColumnSet(columns))
    }

    pub fn all() -> Self {
        ColumnSet((0..CHANNELS).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_all(&self) -> bool {
        self.0.len() == CHANNELS
    }
}

impl TryFrom<Vec<usize>> for ColumnSet {
    type Error = HarError;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        ColumnSet::new(v)
    }
}

impl From<ColumnSet> for Vec<usize> {
    fn from(c: ColumnSet) -> Self {
        c.0
    }
}

impl fmt::Display for ColumnSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// A 128-row matrix of sensor readings over an arbitrary number of columns,
/// stored time-major (`data[t * cols + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl SensorMatrix {
    pub fn new(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || cols > CHANNELS {
            return Err(HarError::shape(format!("column count {cols} not in 1..=9")));
        }
        if data.len() != WINDOW_LEN * cols {
            return Err(HarError::shape(format!(
                "expected {} values for a 128x{cols} window, got {}",
                WINDOW_LEN * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(HarError::invalid(format!(
                "non-finite sample at t={}, column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(SensorMatrix { cols, data })
    }

    pub fn rows(&self) -> usize {
        WINDOW_LEN
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(self.cols).copied()
    }
}

/// One full nine-channel window.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow(SensorMatrix);

impl SignalWindow {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        Ok(SignalWindow(SensorMatrix::new(CHANNELS, data)?))
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(WINDOW_LEN * CHANNELS);
        for t in 0..WINDOW_LEN {
            for c in 0..CHANNELS {
                data.push(f(t, c));
            }
        }
        Self::new(data)
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.0.get(t, c)
    }

    pub fn as_matrix(&self) -> &SensorMatrix {
        &self.0
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.0.data
    }
}

impl AsRef<SensorMatrix> for SignalWindow {
    fn as_ref(&self) -> &SensorMatrix {
        &self.0
    }
}

/// Copy the requested columns of `window`, in order.
pub fn select_columns(window: &SignalWindow, columns: &[usize]) -> Result<SensorMatrix> {
    let set = ColumnSet::new(columns.to_vec())?;
    Ok(select_column_set(window, &set))
}

pub fn select_column_set(window: &SignalWindow, columns: &ColumnSet) -> SensorMatrix {
    let cols = columns.as_slice();
    let mut data = Vec::with_capacity(WINDOW_LEN * cols.len());
    for t in 0..WINDOW_LEN {
        let row = &window.data()[t * CHANNELS..(t + 1) * CHANNELS];
        data.extend(cols.iter().map(|&c| row[c]));
    }
    SensorMatrix {
        cols: cols.len(),
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
    Synthetic,
}

impl Split {
    fn suffix(self) -> &'static str {
        match self {
            Split::Train | Split::Synthetic => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub stddev: [f64; CHANNELS],
}

impl ChannelStats {
    /// Per-channel mean and population deviation over every sample of every window.
    pub fn fit(windows: &[SignalWindow]) -> Self {
        let n = (windows.len() * WINDOW_LEN) as f64;
        let mut mean = [0.0; CHANNELS];
        for w in windows {
            for row in w.data().chunks_exact(CHANNELS) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; CHANNELS];
        for w in windows {
            for row in w.data().chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    let d = row[c] - mean[c];
                    var[c] += d * d;
                }
            }
        }
        let mut stddev = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            let s = (var[c] / n).sqrt();
            stddev[c] = if s < MIN_STDDEV { 1.0 } else { s };
        }
        ChannelStats { mean, stddev }
    }

    pub fn apply(&self, window: &SignalWindow) -> SignalWindow {
        let mut out = window.clone();
        for row in out.data_mut().chunks_exact_mut(CHANNELS) {
            for c in 0..CHANNELS {
                row[c] = (row[c] - self.mean[c]) / self.stddev[c];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    windows: Vec<SignalWindow>,
    labels: Vec<ActivityLabel>,
    split: Split,
    stats: Option<ChannelStats>,
}

impl LabeledDataset {
    pub fn new(windows: Vec<SignalWindow>, labels: Vec<ActivityLabel>, split: Split) -> Result<Self> {
        if windows.is_empty() {
            return Err(HarError::invalid("dataset has no windows"));
        }
        if windows.len() != labels.len() {
            return Err(HarError::invalid(format!(
                "{} windows but {} labels",
                windows.len(),
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            windows,
            labels,
            split,
            stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[SignalWindow] {
        &self.windows
    }

    pub fn labels(&self) -> &[ActivityLabel] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Statistics the windows were standardized with, if any.
    pub fn stats(&self) -> Option<&ChannelStats> {
        self.stats.as_ref()
    }

    pub fn get(&self, i: usize) -> (&SignalWindow, ActivityLabel) {
        (&self.windows[i], self.labels[i])
    }

    /// Window count per class, in canonical label order.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    /// Subset by window index, preserving split and stats.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut out = LabeledDataset::new(
            indices.iter().map(|&i| self.windows[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.split,
        )?;
        out.stats = self.stats.clone();
        Ok(out)
    }

    /// Write the dataset in the UCI HAR text layout under `root`.
    pub fn export_uci_layout(&self, root: &Path) -> Result<()> {
        let suffix = self.split.suffix();
        let dir = root.join(suffix);
        let signals = dir.join("Inertial Signals");
        fs::create_dir_all(&signals).map_err(|e| HarError::io(&signals, e))?;
        for ch in Channel::ALL {
            let path = signals.join(format!("{}_{suffix}.txt", ch.file_stem()));
            let mut out = String::with_capacity(self.len() * WINDOW_LEN * 16);
            for w in &self.windows {
                let line: Vec<String> = w
                    .as_matrix()
                    .column(ch.index())
                    .map(|v| format!("{v:e}"))
                    .collect();
                out.push(' ');
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            write_file(&path, out.as_bytes())?;
        }
        let labels: String = self
            .labels
            .iter()
            .map(|l| format!("{}\n", l.raw()))
            .collect();
        write_file(&dir.join(format!("y_{suffix}.txt")), labels.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| HarError::io(path, e))?;
    f.write_all(bytes).map_err(|e| HarError::io(path, e))
}

fn read_existing(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(HarError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| HarError::io(path, e))
}

/// Locate the split directory; accepts either the dataset root or its parent
/// (the zip extracts to `UCI HAR Dataset/`).
fn split_dir(root: &Path, suffix: &str) -> PathBuf {
    let direct = root.join(suffix);
    if direct.is_dir() {
        return direct;
    }
    let nested = root.join("UCI HAR Dataset").join(suffix);
    if nested.is_dir() {
        return nested;
    }
    direct
}

fn parse_signal_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_existing(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let values = values.map_err(|e| HarError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("unparsable value: {e}"),
        })?;
        if values.len() != WINDOW_LEN {
            return Err(HarError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {WINDOW_LEN} values, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: "non-finite value".into(),
            });
        }
        rows.push(values);
    }
    Ok(rows)
}

fn parse_label_file(path: &Path) -> Result<Vec<ActivityLabel>> {
    let text = read_existing(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let malformed = |message: String| HarError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: i64 = s
            .parse()
            .map_err(|_| malformed(format!("label {s:?} is not an integer")))?;
        let label =
            ActivityLabel::from_raw(raw).ok_or_else(|| malformed(format!("label {raw} outside 1..6")))?;
        labels.push(label);
    }
    Ok(labels)
}

/// Load one split of the UCI HAR "Inertial Signals" data.
pub fn load_uci_har(root: &Path, split: Split) -> Result<LabeledDataset> {
    if split == Split::Synthetic {
        return Err(HarError::invalid("UCI HAR has only Train and Test splits"));
    }
    let suffix = split.suffix();
    let dir = split_dir(root, suffix);
    let label_path = dir.join(format!("y_{suffix}.txt"));
    let labels = parse_label_file(&label_path)?;

    let mut columns = Vec::with_capacity(CHANNELS);
    for ch in Channel::ALL {
        let path = dir
            .join("Inertial Signals")
            .join(format!("{}_{suffix}.txt", ch.file_stem()));
        let rows = parse_signal_file(&path)?;
        if rows.len() != labels.len() {
            return Err(HarError::Malformed {
                line: rows.len().min(labels.len()) + 1,
                path,
                message: format!("{} windows but {} labels", rows.len(), labels.len()),
            });
        }
        columns.push(rows);
    }

    let windows = (0..labels.len())
        .map(|i| SignalWindow::from_fn(|t, c| columns[c][i][t]))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(windows, labels, split)
}

/// Per-class channel pattern used by [`synthesize`]: amplitude, cycles per
/// window and offset for each channel.
fn synthetic_pattern(class: usize, channel: usize) -> (f64, f64, f64) {
    let amp = 0.5 + 0.25 * ((class * 5 + channel * 3) % 7) as f64;
    let cycles = 1.0 + ((class * 3 + channel * 2) % 6) as f64 + class as f64 * 0.5;
    let offset = 0.4 * ((class * 7 + channel) % 5) as f64 - 0.8;
    (amp, cycles, offset)
}

/// Deterministic synthetic corpus: each class is a fixed sinusoid per
/// channel plus seeded Gaussian noise (sigma 0.2).
pub fn synthesize(class_count: usize, windows_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if !(2..=NUM_CLASSES).contains(&class_count) {
        return Err(HarError::invalid(format!(
            "class_count {class_count} not in 2..=6"
        )));
    }
    if windows_per_class == 0 {
        return Err(HarError::invalid("windows_per_class must be at least 1"));
    }
    let mut rng = rng_from(seed, &[stream::SYNTH]);
    let mut windows = Vec::with_capacity(class_count * windows_per_class);
    let mut labels = Vec::with_capacity(class_count * windows_per_class);
    for class in 0..class_count {
        for _ in 0..windows_per_class {
            // Small per-window phase jitter keeps windows of a class distinct.
            let jitter: f64 = rng.random_range(-0.2..0.2);
            let w = SignalWindow::from_fn(|t, c| {
                let (amp, cycles, offset) = synthetic_pattern(class, c);
                let phase = 2.0 * std::f64::consts::PI * cycles * t as f64 / WINDOW_LEN as f64;
                let noise: f64 = StandardNormal.sample(&mut rng);
                offset + amp * (phase + jitter).sin() + 0.2 * noise
            })?;
            windows.push(w);
            labels.push(ActivityLabel::ALL[class]);
        }
    }
    LabeledDataset::new(windows, labels, Split::Synthetic)
}

/// Z-score every channel. With `stats == None` the statistics are fit on
/// `dataset` itself; otherwise the given statistics are applied unchanged.
pub fn standardize(
    dataset: &LabeledDataset,
    stats: Option<&ChannelStats>,
) -> Result<(LabeledDataset, ChannelStats)> {
    if dataset.is_empty() {
        return Err(HarError::invalid("cannot standardize an empty dataset"));
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => ChannelStats::fit(&dataset.windows),
    };
    let windows = dataset.windows.iter().map(|w| stats.apply(w)).collect();
    let mut out = LabeledDataset::new(windows, dataset.labels.clone(), dataset.split)?;
    out.stats = Some(stats.clone());
    Ok((out, stats))
}
