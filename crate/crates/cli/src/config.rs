//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by command-line flags. The resolved value is written next to
//! every run's outputs as `manifest.toml` and can be fed back via `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use har_core::dataset::ColumnSet;
use har_core::introspect::DEFAULT_PIXEL_SCALE;
use har_core::model::{Architecture, NetworkConfig, CNN_LSTM_DEPTH, DEFAULT_LSTM_HIDDEN};
use har_core::occlusion::{DEFAULT_MAX_COLUMNS, DEFAULT_THRESHOLD};
use serde::{Deserialize, Serialize};

pub const MANIFEST_NAME: &str = "manifest.toml";
pub const DEFAULT_SYNTHETIC_PER_CLASS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand that produced a manifest; informational when read back.
    pub command: Option<String>,
    pub data_root: Option<PathBuf>,
    /// Use the synthetic corpus instead of UCI HAR.
    pub synthetic: bool,
    pub synthetic_per_class: usize,
    /// Master seed; copied into `network.seed`.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub network: NetworkConfig,
    pub depths: Vec<usize>,
    pub model: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
    pub layers: Vec<usize>,
    pub per_class: usize,
    pub aggregation: String,
    pub scale: usize,
    pub threshold: f64,
    pub max_cols: usize,
    /// Model whose occlusion report replaces the fixed m1/m2 subsets in `fuse`.
    pub derive_subsets_from: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            data_root: None,
            synthetic: false,
            synthetic_per_class: DEFAULT_SYNTHETIC_PER_CLASS,
            seed: 0,
            out: None,
            network: NetworkConfig::default(),
            depths: vec![1, 2, 3, 4, 5],
            model: None,
            ensemble: None,
            layers: vec![1, 2, 3],
            per_class: 1,
            aggregation: "meanabs".into(),
            scale: DEFAULT_PIXEL_SCALE,
            threshold: DEFAULT_THRESHOLD,
            max_cols: DEFAULT_MAX_COLUMNS,
            derive_subsets_from: None,
        }
    }
}

/// Flag values; `None` leaves the file / default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data_root: Option<PathBuf>,
    pub synthetic: bool,
    pub synthetic_per_class: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub arch: Option<Architecture>,
    pub depth: Option<usize>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub columns: Option<ColumnSet>,
    pub lstm_hidden: Option<usize>,
    pub depths: Option<Vec<usize>>,
    pub model: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
    pub layers: Option<Vec<usize>>,
    pub per_class: Option<usize>,
    pub aggregation: Option<String>,
    pub scale: Option<usize>,
    pub threshold: Option<f64>,
    pub max_cols: Option<usize>,
    pub derive_subsets_from: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Defaults, then `file`, then `flags`.
    pub fn resolve(command: &str, file: Option<&Path>, flags: Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.command = Some(command.to_string());
        if flags.data_root.is_some() {
            cfg.data_root = flags.data_root;
        }
        cfg.synthetic |= flags.synthetic;
        overlay!(cfg.synthetic_per_class, flags.synthetic_per_class);
        overlay!(cfg.seed, flags.seed);
        if flags.out.is_some() {
            cfg.out = flags.out;
        }
        let net = &mut cfg.network;
        overlay!(net.arch, flags.arch);
        overlay!(net.conv_depth, flags.depth);
        overlay!(net.epochs, flags.epochs);
        overlay!(net.batch_size, flags.batch);
        overlay!(net.learning_rate, flags.lr);
        overlay!(net.columns, flags.columns);
        if flags.lstm_hidden.is_some() {
            net.lstm_hidden = flags.lstm_hidden;
        }
        if net.arch == Architecture::CnnLstm {
            net.lstm_hidden.get_or_insert(DEFAULT_LSTM_HIDDEN);
            if flags.depth.is_none() && file.is_none() {
                net.conv_depth = CNN_LSTM_DEPTH;
            }
        }
        net.seed = cfg.seed;
        overlay!(cfg.depths, flags.depths);
        if flags.model.is_some() {
            cfg.model = flags.model;
        }
        if flags.ensemble.is_some() {
            cfg.ensemble = flags.ensemble;
        }
        overlay!(cfg.layers, flags.layers);
        overlay!(cfg.per_class, flags.per_class);
        overlay!(cfg.aggregation, flags.aggregation);
        overlay!(cfg.scale, flags.scale);
        overlay!(cfg.threshold, flags.threshold);
        overlay!(cfg.max_cols, flags.max_cols);
        if flags.derive_subsets_from.is_some() {
            cfg.derive_subsets_from = flags.derive_subsets_from;
        }
        if cfg.seed > i64::MAX as u64 {
            bail!("seed {} does not fit the manifest's integer range", cfg.seed);
        }
        if cfg.synthetic_per_class == 0 {
            bail!("synthetic_per_class must be at least 1");
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            PathBuf::from("runs").join(self.command.as_deref().unwrap_or("run"))
        })
    }

    /// Create the output directory and write the resolved manifest into it.
    pub fn write_manifest(&self) -> Result<PathBuf> {
        let dir = self.out_dir();
        if let Some(root) = &self.data_root {
            if !self.synthetic {
                if let (Ok(root), Ok(out)) = (root.canonicalize(), absolute(&dir)) {
                    if out.starts_with(&root) {
                        bail!("output directory {} lies inside the dataset directory", dir.display());
                    }
                }
            }
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = toml::to_string_pretty(self).context("serializing manifest")?;
        let path = dir.join(MANIFEST_NAME);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(dir)
    }
}

fn absolute(p: &Path) -> std::io::Result<PathBuf> {
    let base = if p.is_absolute() { PathBuf::new() } else { std::env::current_dir()? };
    Ok(base.join(p))
}

/// Parse `"3,4,6-8"` into a sorted list of unique indices.
pub fn parse_index_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once(['-', ':']) {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("descending range {part:?}");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad index {part:?}"))?),
        }
    }
    if out.is_empty() {
        bail!("empty list {s:?}");
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
