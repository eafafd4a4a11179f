//! `har`: train, inspect and evaluate activity-recognition networks on
//! UCI HAR inertial windows (or a synthetic stand-in corpus).

mod commands;
mod config;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use har_core::dataset::ColumnSet;
use har_core::model::Architecture;

use config::{parse_index_list, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "har", version, about = "Human activity recognition workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load both splits and report per-activity window counts.
    Ingest(Common),
    /// Train one network and evaluate it on the test split.
    Train(Common),
    /// Train a CNN per conv depth and tabulate test accuracy.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Depths to try, e.g. "1-5" or "1,3,5".
        #[arg(long, value_parser = parse_list)]
        depths: Option<IndexList>,
    },
    /// Render feature-map heatmaps for sampled test windows.
    Visualize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Conv blocks to capture, e.g. "1-3".
        #[arg(long, value_parser = parse_list)]
        layers: Option<IndexList>,
        /// Windows sampled per activity.
        #[arg(long)]
        per_class: Option<usize>,
        /// meanabs, maxabs or grid.
        #[arg(long)]
        aggregation: Option<String>,
        /// Pixels per activation cell.
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Occlude each column in turn and measure per-activity retention.
    Occlude {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        significance: Significance,
    },
    /// Train the three-member CNN-LSTM fusion ensemble.
    Fuse {
        #[command(flatten)]
        common: Common,
        /// Derive the m1/m2 subsets from this model's occlusion report.
        #[arg(long, value_name = "MODEL")]
        derive_subsets: Option<PathBuf>,
        #[command(flatten)]
        significance: Significance,
    },
    /// Evaluate a saved model or ensemble on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// UCI HAR root (the directory holding train/ and test/).
    #[arg(long, env = "HAR_DATA_ROOT")]
    data_root: Option<PathBuf>,
    /// Use the synthetic corpus instead of UCI HAR.
    #[arg(long)]
    synthetic: bool,
    /// Synthetic windows per activity and split.
    #[arg(long)]
    synthetic_per_class: Option<usize>,
    /// Master seed for initialization, shuffling, dropout and sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default runs/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML run configuration; a previous run's manifest.toml works.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arch: Option<Architecture>,
    /// Number of conv blocks.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Input columns, e.g. "3-8" or "3,4,6,7".
    #[arg(long, value_parser = parse_columns)]
    columns: Option<ColumnSet>,
    #[arg(long)]
    lstm_hidden: Option<usize>,
}

#[derive(Args)]
struct Significance {
    /// Retention below which a column counts as significant.
    #[arg(long)]
    threshold: Option<f64>,
    /// Most significant columns kept per activity.
    #[arg(long)]
    max_cols: Option<usize>,
}

/// Alias so clap parses a whole list from one argument.
type IndexList = Vec<usize>;

fn parse_list(s: &str) -> Result<IndexList, String> {
    parse_index_list(s).map_err(|e| e.to_string())
}

fn parse_columns(s: &str) -> Result<ColumnSet, String> {
    let cols = parse_list(s)?;
    ColumnSet::new(cols).map_err(|e| e.to_string())
}

impl Common {
    fn overrides(self) -> (Option<PathBuf>, Overrides) {
        let o = Overrides {
            data_root: self.data_root,
            synthetic: self.synthetic,
            synthetic_per_class: self.synthetic_per_class,
            seed: self.seed,
            out: self.out,
            arch: self.arch,
            depth: self.depth,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            columns: self.columns,
            lstm_hidden: self.lstm_hidden,
            ..Default::default()
        };
        (self.config, o)
    }
}

type Runner = fn(&RunConfig, &std::path::Path) -> Result<String>;

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (name, common, extra, run): (&str, Common, Box<dyn FnOnce(&mut Overrides)>, Runner) = match cli.command {
        Command::Ingest(c) => ("ingest", c, Box::new(|_| {}), commands::ingest),
        Command::Train(c) => ("train", c, Box::new(|_| {}), commands::train),
        Command::Sweep { common, depths } => ("sweep", common, Box::new(move |o| o.depths = depths), commands::sweep),
        Command::Visualize {
            common,
            model,
            layers,
            per_class,
            aggregation,
            scale,
        } => (
            "visualize",
            common,
            Box::new(move |o| {
                o.model = model;
                o.layers = layers;
                o.per_class = per_class;
                o.aggregation = aggregation;
                o.scale = scale;
            }),
            commands::visualize,
        ),
        Command::Occlude {
            common,
            model,
            significance,
        } => (
            "occlude",
            common,
            Box::new(move |o| {
                o.model = model;
                o.threshold = significance.threshold;
                o.max_cols = significance.max_cols;
            }),
            commands::occlude,
        ),
        Command::Fuse {
            common,
            derive_subsets,
            significance,
        } => (
            "fuse",
            common,
            Box::new(move |o| {
                o.derive_subsets_from = derive_subsets;
                o.threshold = significance.threshold;
                o.max_cols = significance.max_cols;
                o.arch.get_or_insert(Architecture::CnnLstm);
            }),
            commands::fuse,
        ),
        Command::Eval {
            common,
            model,
            ensemble,
        } => (
            "eval",
            common,
            Box::new(move |o| {
                o.model = model;
                o.ensemble = ensemble;
            }),
            commands::eval,
        ),
    };
    let (file, mut overrides) = common.overrides();
    extra(&mut overrides);
    let cfg = RunConfig::resolve(name, file.as_deref(), overrides)?;
    let dir = cfg.write_manifest()?;
    let start = Instant::now();
    let summary = run(&cfg, &dir)?;
    println!("{summary}");
    eprintln!("{name}: done in {:.1}s, outputs in {}", start.elapsed().as_secs_f64(), dir.display());
    Ok(())
}
