//! Three-model column-subset ensemble with majority voting.
//!
//! Model-M sees all nine columns, Model-m1 columns 3..=8 and Model-m2
//! columns {3, 4, 6, 7}. Two or three agreeing votes decide; on a three-way
//! split Model-M's answer stands.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    select_column_set, ActivityLabel, ColumnSet, LabeledDataset, SensorMatrix, SignalWindow,
};
use crate::error::{HarError, Result};
use crate::model::{
    build, evaluation_from, predict, predict_dataset, train, Architecture, Evaluation, NetworkConfig,
    TrainedModel, CNN_LSTM_DEPTH, DEFAULT_LSTM_HIDDEN,
};
use crate::model_io::{load_model, save_model};
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;

pub const SUBSET_M1: [usize; 6] = [3, 4, 5, 6, 7, 8];
pub const SUBSET_M2: [usize; 4] = [3, 4, 6, 7];
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const MODEL_FILES: [&str; 3] = ["model_M.harm", "model_m1.harm", "model_m2.harm"];

/// Majority of three labels; Model-M wins a three-way disagreement.
pub fn vote(result_m: ActivityLabel, result_m1: ActivityLabel, result_m2: ActivityLabel) -> ActivityLabel {
    if result_m1 == result_m2 {
        result_m1
    } else {
        result_m
    }
}

#[derive(Debug, Clone)]
pub struct FusionEnsemble<S> {
    pub model_m: TrainedModel<S>,
    pub model_m1: TrainedModel<S>,
    pub model_m2: TrainedModel<S>,
    pub master_seed: u64,
}

/// Seed of ensemble member `index` (0 = M, 1 = m1, 2 = m2).
pub fn member_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, &[stream::FUSION, index as u64])
}

pub fn default_subsets() -> [ColumnSet; 3] {
    [
        ColumnSet::all(),
        ColumnSet::new(SUBSET_M1.to_vec()).unwrap(),
        ColumnSet::new(SUBSET_M2.to_vec()).unwrap(),
    ]
}

/// Member configs: CNN-LSTM on each subset, seeds derived from `base.seed`.
pub fn member_configs(base: &NetworkConfig, subsets: &[ColumnSet; 3]) -> [NetworkConfig; 3] {
    std::array::from_fn(|i| NetworkConfig {
        arch: Architecture::CnnLstm,
        conv_depth: CNN_LSTM_DEPTH,
        lstm_hidden: Some(base.lstm_hidden.unwrap_or(DEFAULT_LSTM_HIDDEN)),
        columns: subsets[i].clone(),
        seed: member_seed(base.seed, i),
        ..base.clone()
    })
}

/// Train the three members on the standard subsets.
pub fn train_fusion<S: Scalar>(train_set: &LabeledDataset, config: &NetworkConfig) -> Result<FusionEnsemble<S>> {
    let [_, m1, m2] = default_subsets();
    train_fusion_with_subsets(train_set, config, m1, m2)
}

/// Train with custom subsets for m1 and m2 (Model-M always uses all columns).
/// The members are independent and train on separate threads.
pub fn train_fusion_with_subsets<S: Scalar>(
    train_set: &LabeledDataset,
    config: &NetworkConfig,
    subset_m1: ColumnSet,
    subset_m2: ColumnSet,
) -> Result<FusionEnsemble<S>> {
    let configs = member_configs(config, &[ColumnSet::all(), subset_m1, subset_m2]);
    let results: Vec<Result<TrainedModel<S>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || train(build::<S>(cfg)?, train_set, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(HarError::invalid("training thread panicked"))))
            .collect()
    });
    let mut it = results.into_iter();
    Ok(FusionEnsemble {
        model_m: it.next().unwrap()?,
        model_m1: it.next().unwrap()?,
        model_m2: it.next().unwrap()?,
        master_seed: config.seed,
    })
}

impl<S: Scalar> FusionEnsemble<S> {
    pub fn members(&self) -> [&TrainedModel<S>; 3] {
        [&self.model_m, &self.model_m1, &self.model_m2]
    }
}

fn member_input(model: &TrainedModel<impl Scalar>, window: &SignalWindow) -> SensorMatrix {
    select_column_set(window, model.column_subset())
}

/// Classify a full nine-column window.
pub fn predict_fusion<S: Scalar>(ensemble: &FusionEnsemble<S>, window: &SignalWindow) -> Result<ActivityLabel> {
    let [m, m1, m2] = ensemble.members().map(|model| predict(model, &member_input(model, window)));
    Ok(vote(m?.0, m1?.0, m2?.0))
}

pub fn predict_fusion_dataset<S: Scalar>(
    ensemble: &FusionEnsemble<S>,
    dataset: &LabeledDataset,
) -> Result<Vec<ActivityLabel>> {
    let m = predict_dataset(&ensemble.model_m, dataset)?;
    let m1 = predict_dataset(&ensemble.model_m1, dataset)?;
    let m2 = predict_dataset(&ensemble.model_m2, dataset)?;
    Ok(m.into_iter()
        .zip(m1)
        .zip(m2)
        .map(|((a, b), c)| vote(a, b, c))
        .collect())
}

pub fn evaluate_fusion<S: Scalar>(ensemble: &FusionEnsemble<S>, test_set: &LabeledDataset) -> Result<Evaluation> {
    evaluation_from(&predict_fusion_dataset(ensemble, test_set)?, test_set.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub role: String,
    pub file: String,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub members: Vec<MemberEntry>,
}

pub fn save_ensemble<S: Scalar>(ensemble: &FusionEnsemble<S>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarError::io(dir, e))?;
    let roles = ["M", "m1", "m2"];
    let mut members = Vec::with_capacity(3);
    for ((model, file), role) in ensemble.members().into_iter().zip(MODEL_FILES).zip(roles) {
        save_model(model, &dir.join(file))?;
        members.push(MemberEntry {
            role: role.into(),
            file: file.into(),
            columns: model.column_subset().as_slice().to_vec(),
        });
    }
    let manifest = EnsembleManifest {
        format_version: MANIFEST_VERSION,
        master_seed: ensemble.master_seed,
        members,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| HarError::ModelFormat(format!("manifest: {e}")))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(|e| HarError::io(&path, e))
}

pub fn load_ensemble<S: Scalar>(dir: &Path) -> Result<FusionEnsemble<S>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(HarError::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| HarError::io(&path, e))?;
    let manifest: EnsembleManifest =
        serde_json::from_str(&text).map_err(|e| HarError::ModelFormat(format!("manifest: {e}")))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(HarError::VersionMismatch {
            found: manifest.format_version,
            expected: MANIFEST_VERSION,
        });
    }
    if manifest.members.len() != 3 {
        return Err(HarError::ModelFormat("ensemble manifest must list three members".into()));
    }
    let mut models = Vec::with_capacity(3);
    for entry in &manifest.members {
        let model = load_model::<S>(&dir.join(&entry.file))?;
        if model.column_subset().as_slice() != entry.columns.as_slice() {
            return Err(HarError::ModelFormat(format!(
                "member {} columns differ from manifest",
                entry.role
            )));
        }
        models.push(model);
    }
    if !models[0].column_subset().is_all() {
        return Err(HarError::ModelFormat("Model-M must use all nine columns".into()));
    }
    let mut it = models.into_iter();
    Ok(FusionEnsemble {
        model_m: it.next().unwrap(),
        model_m1: it.next().unwrap(),
        model_m2: it.next().unwrap(),
        master_seed: manifest.master_seed,
    })
}
