//! Feature-map capture and heatmap rendering.
//!
//! Rendered images put time on the vertical axis (one row per pooled time
//! step) and sensor columns on the horizontal axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;

use crate::dataset::{ActivityLabel, LabeledDataset, SignalWindow, NUM_CLASSES};
use crate::error::{HarError, Result};
use crate::model::{batch_tensor, TrainedModel};
use crate::nn::{LayerKind, Tensor};
use crate::rng::{rng_from, stream};
use crate::scalar::Scalar;
use crate::dataset::select_column_set;

pub const DEFAULT_PIXEL_SCALE: usize = 8;

/// Activations of one conv block, captured right after its pooling stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// 1-based conv block index.
    pub layer_index: usize,
    /// `[time, column, filter]`
    pub activations: Tensor<f64>,
    pub source_window_id: usize,
    pub source_label: ActivityLabel,
}

impl FeatureMap {
    pub fn time(&self) -> usize {
        self.activations.shape()[0]
    }

    pub fn columns(&self) -> usize {
        self.activations.shape()[1]
    }

    pub fn filters(&self) -> usize {
        self.activations.shape()[2]
    }

    pub fn at(&self, t: usize, c: usize, f: usize) -> f64 {
        self.activations.data()[(t * self.columns() + c) * self.filters() + f]
    }
}

/// Index into the layer stack of the pooling layer that closes block `layer_index` (1-based).
fn pool_layer_position<S: Scalar>(model: &TrainedModel<S>, layer_index: usize) -> Result<usize> {
    let pools: Vec<usize> = model
        .network
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind() == LayerKind::MaxPool)
        .map(|(i, _)| i)
        .collect();
    if layer_index == 0 || layer_index > pools.len() {
        return Err(HarError::invalid(format!(
            "layer index {layer_index} not in 1..={}",
            pools.len()
        )));
    }
    Ok(pools[layer_index - 1])
}

/// Pooled activations of block `layer_index` for one window, plus the
/// network's class probabilities from the same pass.
pub fn capture<S: Scalar>(
    model: &TrainedModel<S>,
    window: &SignalWindow,
    layer_index: usize,
) -> Result<(Tensor<f64>, Vec<f64>)> {
    let pos = pool_layer_position(model, layer_index)?;
    let input = select_column_set(window, &model.config.columns);
    let x = batch_tensor::<S>(&[&input])?;
    let taps = model.network.infer_with_taps(&x)?;
    let tap = &taps[pos];
    let shape = tap.shape()[1..].to_vec();
    let act = Tensor::new(shape, tap.data().iter().map(|v| v.as_f64()).collect())?;
    let probs = taps.last().unwrap().to_f64_vec();
    Ok((act, probs))
}

pub fn feature_maps<S: Scalar>(
    model: &TrainedModel<S>,
    dataset: &LabeledDataset,
    window_id: usize,
    layer_index: usize,
) -> Result<FeatureMap> {
    if window_id >= dataset.len() {
        return Err(HarError::invalid(format!("window id {window_id} out of range")));
    }
    let (window, label) = dataset.get(window_id);
    let (activations, _) = capture(model, window, layer_index)?;
    Ok(FeatureMap {
        layer_index,
        activations,
        source_window_id: window_id,
        source_label: label,
    })
}

/// Seeded uniform sample of `n` window ids per activity, without replacement.
pub fn sample_windows_per_activity(
    dataset: &LabeledDataset,
    n: usize,
    seed: u64,
) -> Result<BTreeMap<ActivityLabel, Vec<usize>>> {
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, l) in dataset.labels().iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let mut out = BTreeMap::new();
    for label in ActivityLabel::ALL {
        let ids = &by_class[label.index()];
        if ids.len() < n {
            return Err(HarError::invalid(format!(
                "{label} has {} windows, {n} requested",
                ids.len()
            )));
        }
        let mut rng = rng_from(seed, &[stream::SAMPLE, label.index() as u64]);
        let picked = sample(&mut rng, ids.len(), n).into_iter().map(|j| ids[j]).collect();
        out.insert(label, picked);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    MeanAbs,
    MaxAbs,
    PerFilterGrid,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::MeanAbs => "meanabs",
            Aggregation::MaxAbs => "maxabs",
            Aggregation::PerFilterGrid => "grid",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = HarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "meanabs" | "mean-abs" => Ok(Aggregation::MeanAbs),
            "maxabs" | "max-abs" => Ok(Aggregation::MaxAbs),
            "grid" | "per-filter-grid" => Ok(Aggregation::PerFilterGrid),
            other => Err(HarError::invalid(format!("unknown aggregation {other:?}"))),
        }
    }
}

/// Unnormalized panel values, row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Panel {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum::<f64>() / self.rows as f64)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| format!("{}", self.get(r, c))).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Grid layout for tiling `filters` panels: (panel rows, panel columns).
pub fn grid_dims(filters: usize) -> (usize, usize) {
    let cols = (filters as f64).sqrt().ceil() as usize;
    (filters.div_ceil(cols), cols)
}

pub fn aggregate(fm: &FeatureMap, aggregation: Aggregation) -> Panel {
    let (t, c, f) = (fm.time(), fm.columns(), fm.filters());
    match aggregation {
        Aggregation::MeanAbs | Aggregation::MaxAbs => {
            let mut values = Vec::with_capacity(t * c);
            for ti in 0..t {
                for ci in 0..c {
                    let abs = (0..f).map(|fi| fm.at(ti, ci, fi).abs());
                    values.push(match aggregation {
                        Aggregation::MeanAbs => abs.sum::<f64>() / f as f64,
                        _ => abs.fold(0.0, f64::max),
                    });
                }
            }
            Panel { rows: t, cols: c, values }
        }
        Aggregation::PerFilterGrid => {
            let (gr, gc) = grid_dims(f);
            let (rows, cols) = (gr * t, gc * c);
            let mut values = vec![0.0; rows * cols];
            for fi in 0..f {
                let (pr, pc) = (fi / gc, fi % gc);
                for ti in 0..t {
                    for ci in 0..c {
                        values[(pr * t + ti) * cols + pc * c + ci] = fm.at(ti, ci, fi);
                    }
                }
            }
            Panel { rows, cols, values }
        }
    }
}

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary P5 portable graymap.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| HarError::Image("pixel buffer size mismatch".into()))?;
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| HarError::Image(e.to_string()))?;
        Ok(buf.into_inner())
    }
}

/// Min-max normalize a panel to [0, 1]; a constant panel maps to 0.5.
pub fn normalize(panel: &Panel) -> Vec<f64> {
    let lo = panel.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = panel.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.5; panel.values.len()];
    }
    panel.values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn render_heatmap(fm: &FeatureMap, aggregation: Aggregation, scale: usize) -> Result<GrayImage> {
    if fm.activations.is_empty() {
        return Err(HarError::invalid("feature map is empty"));
    }
    if scale == 0 {
        return Err(HarError::invalid("pixel scale must be positive"));
    }
    let panel = aggregate(fm, aggregation);
    let norm = normalize(&panel);
    let (width, height) = (panel.cols * scale, panel.rows * scale);
    let mut pixels = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let v = norm[(y / scale) * panel.cols + x / scale];
            pixels[y * width + x] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(GrayImage { width, height, pixels })
}

/// Base filename `<activity>_w<id>_l<layer>_<aggregation>` (no extension).
pub fn file_stem(fm: &FeatureMap, aggregation: Aggregation) -> String {
    format!(
        "{}_w{}_l{}_{}",
        fm.source_label.name().to_ascii_lowercase(),
        fm.source_window_id,
        fm.layer_index,
        aggregation.name()
    )
}

/// Write `<stem>.pgm`, `<stem>.png` and `<stem>.csv` into `dir`; returns the paths.
pub fn export_heatmap(fm: &FeatureMap, aggregation: Aggregation, scale: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarError::io(dir, e))?;
    let img = render_heatmap(fm, aggregation, scale)?;
    let stem = file_stem(fm, aggregation);
    let outputs = [
        (dir.join(format!("{stem}.pgm")), img.to_pgm()),
        (dir.join(format!("{stem}.png")), img.to_png()?),
        (dir.join(format!("{stem}.csv")), aggregate(fm, aggregation).to_csv().into_bytes()),
    ];
    let mut paths = Vec::with_capacity(outputs.len());
    for (path, bytes) in outputs {
        fs::write(&path, bytes).map_err(|e| HarError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
