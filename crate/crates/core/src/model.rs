//! Network architectures, the training loop and prediction.
//!
//! A CNN is `depth` blocks of `Conv(5x1, 50) -> ReLU -> MaxPool(3x1) ->
//! BatchNorm -> Dropout(0.5)` followed by `Flatten -> Dense(6) -> Softmax`.
//! The CNN-LSTM keeps the three conv blocks, flattens each time step across
//! columns and filters, and feeds the sequence to a single LSTM whose final
//! hidden state goes through `Dense(6) -> Softmax`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    select_column_set, ActivityLabel, ColumnSet, LabeledDataset, SensorMatrix, SignalWindow,
    NUM_CLASSES, WINDOW_LEN,
};
use crate::error::{HarError, Result};
use crate::metrics::{accuracy, confusion_matrix, macro_f1, ConfusionMatrix};
use crate::nn::{
    cross_entropy, one_hot, softmax_cross_entropy_grad, LayerSpec, Network, Padding, Sgd, Tensor,
};
use crate::rng::{rng_from, stream};
use crate::scalar::Scalar;

pub const MAX_DEPTH: usize = 5;
pub const DEFAULT_LSTM_HIDDEN: usize = 64;
/// Conv depth of the CNN-LSTM.
pub const CNN_LSTM_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Cnn,
    CnnLstm,
}

impl std::str::FromStr for Architecture {
    type Err = HarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Architecture::Cnn),
            "cnn-lstm" => Ok(Architecture::CnnLstm),
            other => Err(HarError::invalid(format!("unknown architecture {other:?}"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Cnn => "cnn",
            Architecture::CnnLstm => "cnn-lstm",
        })
    }
}

/// Hyperparameters. `Default` is the depth-3 CNN with filters 50, kernel
/// 5x1, pool 3x1, dropout 0.5, learning rate 0.01, 50 epochs, batch 32.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub arch: Architecture,
    pub input_time: usize,
    pub columns: ColumnSet,
    pub conv_depth: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub padding: Padding,
    pub dropout_prob: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lstm_hidden: Option<usize>,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            arch: Architecture::Cnn,
            input_time: WINDOW_LEN,
            columns: ColumnSet::all(),
            conv_depth: 3,
            filters: 50,
            kernel: 5,
            pool: 3,
            padding: Padding::Same,
            dropout_prob: 0.5,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            lstm_hidden: None,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Three conv blocks plus one LSTM layer.
    pub fn cnn_lstm() -> Self {
        NetworkConfig {
            arch: Architecture::CnnLstm,
            conv_depth: CNN_LSTM_DEPTH,
            lstm_hidden: Some(DEFAULT_LSTM_HIDDEN),
            ..Default::default()
        }
    }

    pub fn input_channels(&self) -> usize {
        self.columns.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DEPTH).contains(&self.conv_depth) {
            return Err(HarError::invalid(format!(
                "conv depth {} not in 1..={MAX_DEPTH}",
                self.conv_depth
            )));
        }
        if self.input_time != WINDOW_LEN {
            return Err(HarError::invalid(format!("input time must be {WINDOW_LEN}")));
        }
        if self.filters == 0 || self.kernel == 0 || self.pool == 0 || self.batch_size == 0 {
            return Err(HarError::invalid("filters, kernel, pool and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(HarError::invalid("dropout probability must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HarError::invalid("learning rate must be positive"));
        }
        match (self.arch, self.lstm_hidden) {
            (Architecture::CnnLstm, None) => {
                Err(HarError::invalid("cnn-lstm architecture needs lstm_hidden"))
            }
            (Architecture::CnnLstm, Some(0)) => Err(HarError::invalid("lstm_hidden must be positive")),
            _ => Ok(()),
        }
    }

    fn conv_blocks(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(5 * self.conv_depth);
        for _ in 0..self.conv_depth {
            specs.push(LayerSpec::Conv2d {
                kernel: self.kernel,
                filters: self.filters,
                padding: self.padding,
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::MaxPool { size: self.pool });
            specs.push(LayerSpec::BatchNorm);
            specs.push(LayerSpec::Dropout {
                prob: self.dropout_prob,
            });
        }
        specs
    }

    /// Layer stack for this configuration.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let mut specs = self.conv_blocks();
        match self.arch {
            Architecture::Cnn => specs.push(LayerSpec::Flatten { keep_time: false }),
            Architecture::CnnLstm => {
                specs.push(LayerSpec::Flatten { keep_time: true });
                specs.push(LayerSpec::Lstm {
                    hidden: self.lstm_hidden.unwrap(),
                });
            }
        }
        specs.push(LayerSpec::Dense { units: NUM_CLASSES });
        specs.push(LayerSpec::Softmax);
        Ok(specs)
    }

    /// Per-sample network input shape `[time, columns, 1]`.
    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_time, self.input_channels(), 1]
    }
}

fn build_network<S: Scalar>(config: &NetworkConfig) -> Result<Network<S>> {
    let specs = config.layer_specs()?;
    let mut rng = rng_from(config.seed, &[stream::INIT]);
    Network::build(&specs, &config.input_shape(), &mut rng)
}

/// Untrained CNN of `config.conv_depth` blocks (the architecture field is ignored).
pub fn build_cnn<S: Scalar>(config: &NetworkConfig) -> Result<Network<S>> {
    let cfg = NetworkConfig {
        arch: Architecture::Cnn,
        ..config.clone()
    };
    build_network(&cfg)
}

/// Untrained CNN-LSTM; `config.lstm_hidden` must be set.
pub fn build_cnn_lstm<S: Scalar>(config: &NetworkConfig) -> Result<Network<S>> {
    if config.lstm_hidden.is_none() {
        return Err(HarError::invalid("cnn-lstm architecture needs lstm_hidden"));
    }
    let cfg = NetworkConfig {
        arch: Architecture::CnnLstm,
        conv_depth: CNN_LSTM_DEPTH,
        ..config.clone()
    };
    build_network(&cfg)
}

pub fn build<S: Scalar>(config: &NetworkConfig) -> Result<Network<S>> {
    match config.arch {
        Architecture::Cnn => build_cnn(config),
        Architecture::CnnLstm => build_cnn_lstm(config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<S> {
    pub config: NetworkConfig,
    pub network: Network<S>,
    pub history: Vec<EpochStats>,
}

impl<S: Scalar> TrainedModel<S> {
    pub fn column_subset(&self) -> &ColumnSet {
        &self.config.columns
    }
}

/// Stack matrices into a `[n, 128, cols, 1]` input tensor.
pub fn batch_tensor<S: Scalar>(samples: &[&SensorMatrix]) -> Result<Tensor<S>> {
    let cols = samples
        .first()
        .ok_or_else(|| HarError::invalid("empty batch"))?
        .cols();
    let mut data = Vec::with_capacity(samples.len() * WINDOW_LEN * cols);
    for m in samples {
        if m.cols() != cols {
            return Err(HarError::shape("batch mixes column counts"));
        }
        data.extend(m.data().iter().map(|&v| S::of(v)));
    }
    Tensor::new(vec![samples.len(), WINDOW_LEN, cols, 1], data)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Train with shuffled mini-batch SGD on the configured column subset.
///
/// The shuffle order and dropout masks of epoch `e` come from streams
/// derived from `(config.seed, e)`, so identical inputs give bit-identical
/// parameters.
pub fn train<S: Scalar>(
    mut network: Network<S>,
    train_set: &LabeledDataset,
    config: &NetworkConfig,
) -> Result<TrainedModel<S>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(HarError::invalid("training set is empty"));
    }
    let expected = config.input_shape();
    if network.input_shape() != expected {
        return Err(HarError::shape(format!(
            "network input {:?} does not match config {:?}",
            network.input_shape(),
            expected
        )));
    }
    let inputs: Vec<SensorMatrix> = train_set
        .windows()
        .iter()
        .map(|w| select_column_set(w, &config.columns))
        .collect();
    let classes: Vec<usize> = train_set.labels().iter().map(|l| l.index()).collect();

    let mut sgd = Sgd::new(config.learning_rate)?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 0..config.epochs {
        let mut shuffle_rng = rng_from(config.seed, &[stream::SHUFFLE, epoch as u64]);
        let mut dropout_rng = rng_from(config.seed, &[stream::DROPOUT, epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<&SensorMatrix> = batch.iter().map(|&i| &inputs[i]).collect();
            let batch_classes: Vec<usize> = batch.iter().map(|&i| classes[i]).collect();
            let x = batch_tensor::<S>(&samples)?;
            let y = one_hot::<S>(&batch_classes, NUM_CLASSES)?;

            network.zero_grad();
            let probs = network.forward(&x, Some(&mut dropout_rng))?;
            let loss = cross_entropy(&probs, &y)?;
            loss_sum += loss.as_f64() * batch.len() as f64;
            correct += probs
                .data()
                .chunks_exact(NUM_CLASSES)
                .zip(&batch_classes)
                .filter(|(row, &c)| argmax(row) == c)
                .count();
            let grad = softmax_cross_entropy_grad(&probs, &y)?;
            network.backward_from_logits(&grad)?;
            sgd.step(&mut network)?;
        }
        if let Some(name) = network.first_non_finite() {
            return Err(HarError::NonFinite { name, epoch });
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / inputs.len() as f64,
            accuracy: correct as f64 / inputs.len() as f64,
        });
    }
    network.clear_cache();
    Ok(TrainedModel {
        config: config.clone(),
        network,
        history,
    })
}

/// Build and train in one step.
pub fn fit<S: Scalar>(train_set: &LabeledDataset, config: &NetworkConfig) -> Result<TrainedModel<S>> {
    train(build(config)?, train_set, config)
}

/// Class probabilities of one input whose columns already match the model's subset.
pub fn predict<S: Scalar>(
    model: &TrainedModel<S>,
    input: &SensorMatrix,
) -> Result<(ActivityLabel, [f64; NUM_CLASSES])> {
    Ok(predict_batch(model, &[input])?[0])
}

const INFER_CHUNK: usize = 64;

/// Batched [`predict`]; per-sample results do not depend on batch composition.
pub fn predict_batch<S: Scalar>(
    model: &TrainedModel<S>,
    inputs: &[&SensorMatrix],
) -> Result<Vec<(ActivityLabel, [f64; NUM_CLASSES])>> {
    let cols = model.config.input_channels();
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(INFER_CHUNK) {
        if let Some(bad) = chunk.iter().find(|m| m.cols() != cols) {
            return Err(HarError::shape(format!(
                "model consumes {cols} columns, input has {}",
                bad.cols()
            )));
        }
        let probs = model.network.infer(&batch_tensor::<S>(chunk)?)?;
        for row in probs.data().chunks_exact(NUM_CLASSES) {
            let mut p = [0.0; NUM_CLASSES];
            for (d, s) in p.iter_mut().zip(row) {
                *d = s.as_f64();
            }
            // Exactly NUM_CLASSES outputs, so the index is in range.
            out.push((ActivityLabel::from_index(argmax(row)).unwrap(), p));
        }
    }
    Ok(out)
}

/// Predict a full nine-column window, slicing the model's columns first.
pub fn predict_window<S: Scalar>(
    model: &TrainedModel<S>,
    window: &SignalWindow,
) -> Result<(ActivityLabel, [f64; NUM_CLASSES])> {
    predict(model, &select_column_set(window, &model.config.columns))
}

/// Predicted labels for every window of `dataset`.
pub fn predict_dataset<S: Scalar>(model: &TrainedModel<S>, dataset: &LabeledDataset) -> Result<Vec<ActivityLabel>> {
    let inputs: Vec<SensorMatrix> = dataset
        .windows()
        .iter()
        .map(|w| select_column_set(w, &model.config.columns))
        .collect();
    let refs: Vec<&SensorMatrix> = inputs.iter().collect();
    Ok(predict_batch(model, &refs)?.into_iter().map(|(l, _)| l).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate<S: Scalar>(model: &TrainedModel<S>, test_set: &LabeledDataset) -> Result<Evaluation> {
    let predicted = predict_dataset(model, test_set)?;
    evaluation_from(&predicted, test_set.labels())
}

pub(crate) fn evaluation_from(predicted: &[ActivityLabel], truth: &[ActivityLabel]) -> Result<Evaluation> {
    let confusion = confusion_matrix(predicted, truth)?;
    Ok(Evaluation {
        accuracy: accuracy(&confusion)?,
        macro_f1: macro_f1(&confusion)?,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthResult {
    pub depth: usize,
    pub evaluation: Evaluation,
}

/// Train one CNN per depth with the same seed and score each on `test_set`.
pub fn run_depth_sweep<S: Scalar>(
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    depths: &[usize],
    config: &NetworkConfig,
) -> Result<Vec<DepthResult>> {
    if depths.is_empty() {
        return Err(HarError::invalid("depth sweep needs at least one depth"));
    }
    depths
        .iter()
        .map(|&depth| {
            let cfg = NetworkConfig {
                arch: Architecture::Cnn,
                conv_depth: depth,
                ..config.clone()
            };
            let model = fit::<S>(train_set, &cfg)?;
            Ok(DepthResult {
                depth,
                evaluation: evaluate(&model, test_set)?,
            })
        })
        .collect()
}
