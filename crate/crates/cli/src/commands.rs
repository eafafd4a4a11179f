//! Subcommand implementations. Each one takes a resolved [`RunConfig`],
//! writes its artifacts under the run's output directory and returns a
//! short summary for the terminal.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use har_core::dataset::{load_uci_har, standardize, synthesize, ActivityLabel, ColumnSet, LabeledDataset, Split, NUM_CLASSES};
use har_core::fusion::{evaluate_fusion, load_ensemble, save_ensemble, train_fusion_with_subsets, SUBSET_M1, SUBSET_M2};
use har_core::introspect::{export_heatmap, feature_maps, sample_windows_per_activity, Aggregation};
use har_core::metrics::compare_report;
use har_core::model::{evaluate, fit, run_depth_sweep, Architecture, Evaluation, TrainedModel};
use har_core::model_io::{load_model, save_model};
use har_core::occlusion::{derive_significant_columns, occlusion_report, REFERENCE_SIGNIFICANT_COLUMNS};
use har_core::rng::{derive_seed, stream};

use crate::config::RunConfig;

/// Tolerance used to flag deltas against the reference results.
pub const REPORT_TOLERANCE: f64 = 0.03;
pub const MODEL_FILE: &str = "model.harm";
pub const ENSEMBLE_DIR: &str = "ensemble";

/// Train and test splits, both standardized with the training statistics.
pub struct Data {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub synthetic: bool,
}

pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    let (train, test) = if cfg.synthetic {
        let n = cfg.synthetic_per_class;
        (
            synthesize(NUM_CLASSES, n, derive_seed(cfg.seed, &[stream::SYNTH, 0]))?,
            synthesize(NUM_CLASSES, n, derive_seed(cfg.seed, &[stream::SYNTH, 1]))?,
        )
    } else {
        let Some(root) = &cfg.data_root else {
            bail!("no dataset: pass --data-root (or set HAR_DATA_ROOT), or use --synthetic");
        };
        let train = load_uci_har(root, Split::Train).with_context(|| format!("loading train split from {}", root.display()))?;
        let test = load_uci_har(root, Split::Test).with_context(|| format!("loading test split from {}", root.display()))?;
        (train, test)
    };
    let (train, stats) = standardize(&train, None)?;
    let (test, _) = standardize(&test, Some(&stats))?;
    Ok(Data {
        train,
        test,
        synthetic: cfg.synthetic,
    })
}

/// Result name used in comparison reports. Synthetic runs get a suffix so
/// they are never compared with the published figures.
fn report_name(base: &str, synthetic: bool) -> String {
    if synthetic {
        format!("{base} (synthetic)")
    } else {
        base.to_string()
    }
}

fn arch_name(arch: Architecture) -> &'static str {
    match arch {
        Architecture::Cnn => "CNN",
        Architecture::CnnLstm => "CNN-LSTM",
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Comparison report, confusion matrices and a one-line summary.
fn write_evaluation(dir: &Path, name: &str, eval: &Evaluation) -> Result<String> {
    let report = compare_report(&[(name, eval.accuracy, eval.macro_f1)], REPORT_TOLERANCE)?;
    write(dir, "report.txt", report.to_text())?;
    write(dir, "report.csv", report.to_csv())?;
    write(dir, "confusion.csv", eval.confusion.to_csv(false))?;
    write(dir, "confusion_transposed.csv", eval.confusion.to_csv(true))?;
    Ok(format!(
        "{}\n{}",
        report.to_text().trim_end(),
        eval.confusion.to_text().trim_end()
    ))
}

fn require_model_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.model.as_deref().context("this command needs --model <FILE>")
}

fn open_model(path: &Path) -> Result<TrainedModel<f64>> {
    load_model::<f64>(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn ingest(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let data = load_data(cfg)?;
    let mut csv = String::from("split,activity,windows\n");
    let mut text = String::new();
    let _ = writeln!(text, "{:<11}{:>8}{:>8}", "activity", "train", "test");
    let (tr, te) = (data.train.class_counts(), data.test.class_counts());
    for a in ActivityLabel::ALL {
        let _ = writeln!(csv, "train,{},{}", a.name(), tr[a.index()]);
        let _ = writeln!(csv, "test,{},{}", a.name(), te[a.index()]);
        let _ = writeln!(text, "{:<11}{:>8}{:>8}", a.name(), tr[a.index()], te[a.index()]);
    }
    let _ = write!(text, "{:<11}{:>8}{:>8}", "total", data.train.len(), data.test.len());
    write(dir, "summary.csv", csv)?;
    Ok(text)
}

pub fn train(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let data = load_data(cfg)?;
    let model = fit::<f64>(&data.train, &cfg.network)?;
    save_model(&model, &dir.join(MODEL_FILE))?;
    let mut history = String::from("epoch,loss,accuracy\n");
    for e in &model.history {
        let _ = writeln!(history, "{},{:.6},{:.6}", e.epoch, e.loss, e.accuracy);
    }
    write(dir, "history.csv", history)?;
    let eval = evaluate(&model, &data.test)?;
    let name = report_name(arch_name(cfg.network.arch), data.synthetic);
    write_evaluation(dir, &name, &eval)
}

pub fn sweep(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let data = load_data(cfg)?;
    let results = run_depth_sweep::<f64>(&data.train, &data.test, &cfg.depths, &cfg.network)?;
    let mut csv = String::from("depth,accuracy,macro_f1\n");
    let mut text = format!("{:<7}{:>10}{:>10}\n", "depth", "accuracy", "macro_f1");
    for r in &results {
        let _ = writeln!(csv, "{},{:.6},{:.6}", r.depth, r.evaluation.accuracy, r.evaluation.macro_f1);
        let _ = writeln!(text, "{:<7}{:>10.4}{:>10.4}", r.depth, r.evaluation.accuracy, r.evaluation.macro_f1);
    }
    write(dir, "sweep.csv", csv)?;
    Ok(text.trim_end().to_string())
}

pub fn visualize(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let model = open_model(require_model_path(cfg)?)?;
    let aggregation: Aggregation = cfg.aggregation.parse()?;
    let data = load_data(cfg)?;
    let picks = sample_windows_per_activity(&data.test, cfg.per_class, cfg.seed)?;
    let heatmaps = dir.join("heatmaps");
    fs::create_dir_all(&heatmaps).with_context(|| format!("creating {}", heatmaps.display()))?;
    let mut index = String::from("activity,window_id,layer,file\n");
    let mut count = 0;
    for (activity, ids) in &picks {
        for &id in ids {
            for &layer in &cfg.layers {
                let fm = feature_maps(&model, &data.test, id, layer)?;
                for path in export_heatmap(&fm, aggregation, cfg.scale, &heatmaps)? {
                    let rel = path.strip_prefix(dir).unwrap_or(&path);
                    let _ = writeln!(index, "{},{id},{layer},{}", activity.name(), rel.display());
                    count += 1;
                }
            }
        }
    }
    write(dir, "index.csv", index)?;
    Ok(format!("{count} heatmap files written to {}", heatmaps.display()))
}

pub fn occlude(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let model = open_model(require_model_path(cfg)?)?;
    let data = load_data(cfg)?;
    let report = occlusion_report(&model, &data.test)?;
    write(dir, "retention.csv", report.to_csv())?;
    write(dir, "retention.txt", report.to_text())?;
    let significant = derive_significant_columns(&report, cfg.threshold, cfg.max_cols)?;
    let mut text = significant.to_text();
    if !data.synthetic {
        let agree = significant.agreement(&REFERENCE_SIGNIFICANT_COLUMNS);
        let names: Vec<&str> = agree.iter().map(|a| a.name()).collect();
        let _ = writeln!(text, "matches the published sets for {}/{NUM_CLASSES}: {}", agree.len(), names.join(", "));
    }
    write(dir, "significant.txt", &text)?;
    Ok(format!("{}\n{}", report.to_text().trim_end(), text.trim_end()))
}

/// m1 = union of every activity's significant columns, m2 = union of each
/// activity's single most significant column.
pub fn derive_subsets(cfg: &RunConfig, model_path: &Path, test: &LabeledDataset) -> Result<(ColumnSet, ColumnSet)> {
    let model = open_model(model_path)?;
    let report = occlusion_report(&model, test)?;
    let union = |max: usize| -> Result<ColumnSet> {
        let sig = derive_significant_columns(&report, cfg.threshold, max)?;
        let cols: BTreeSet<usize> = ActivityLabel::ALL.iter().flat_map(|a| sig.get(*a).iter().copied()).collect();
        if cols.is_empty() {
            bail!("no column falls below retention {} for any activity", cfg.threshold);
        }
        Ok(ColumnSet::new(cols.into_iter().collect())?)
    };
    Ok((union(cfg.max_cols)?, union(1)?))
}

pub fn fuse(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let data = load_data(cfg)?;
    let (m1, m2) = match &cfg.derive_subsets_from {
        Some(path) => derive_subsets(cfg, path, &data.test)?,
        None => (ColumnSet::new(SUBSET_M1.to_vec())?, ColumnSet::new(SUBSET_M2.to_vec())?),
    };
    let ensemble = train_fusion_with_subsets::<f64>(&data.train, &cfg.network, m1.clone(), m2.clone())?;
    save_ensemble(&ensemble, &dir.join(ENSEMBLE_DIR))?;
    let eval = evaluate_fusion(&ensemble, &data.test)?;
    let summary = write_evaluation(dir, &report_name("Fusion", data.synthetic), &eval)?;
    Ok(format!("subsets m1 = {m1}, m2 = {m2}\n{summary}"))
}

pub fn eval(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let data = load_data(cfg)?;
    let (name, eval) = match (&cfg.model, &cfg.ensemble) {
        (Some(_), Some(_)) => bail!("pass either --model or --ensemble, not both"),
        (Some(path), None) => {
            let model = open_model(path)?;
            (arch_name(model.config.arch), evaluate(&model, &data.test)?)
        }
        (None, Some(path)) => {
            let ensemble = load_ensemble::<f64>(path).with_context(|| format!("loading ensemble {}", path.display()))?;
            ("Fusion", evaluate_fusion(&ensemble, &data.test)?)
        }
        (None, None) => bail!("this command needs --model <FILE> or --ensemble <DIR>"),
    };
    write_evaluation(dir, &report_name(name, data.synthetic), &eval)
}
