//! Human-activity-recognition workbench on 128 x 9 inertial sensor windows.
//!
//! * [`dataset`]: UCI HAR loading, synthetic corpora, standardization, column slicing
//! * [`nn`]: layer-stack engine (conv, pooling, batch norm, dropout, dense, LSTM, softmax) with exact backprop and SGD
//! * [`model`]: CNN and CNN-LSTM architectures, training, prediction, depth sweeps
//! * [`model_io`]: checksummed binary model files
//! * [`introspect`]: per-block feature maps rendered as heatmaps
//! * [`occlusion`]: column occlusion retention and significant-column selection
//! * [`fusion`]: three-model column-subset ensemble with voting
//! * [`metrics`]: confusion matrices, accuracy, macro-F1, comparison reports
//!
//! The numeric core is generic over [`Scalar`] (`f32` / `f64`); the aliases
//! below fix it to `f64`, which the training pipeline uses throughout.

pub mod dataset;
pub mod error;
pub mod fusion;
pub mod introspect;
pub mod metrics;
pub mod model;
pub mod model_io;
pub mod nn;
pub mod occlusion;
pub mod rng;
pub mod scalar;

pub use error::{HarError, Result};
pub use scalar::Scalar;

pub type Tensor = nn::Tensor<f64>;
pub type Network = nn::Network<f64>;
pub type Model = model::TrainedModel<f64>;
pub type Ensemble = fusion::FusionEnsemble<f64>;

pub type Tensor32 = nn::Tensor<f32>;
pub type Network32 = nn::Network<f32>;
pub type Model32 = model::TrainedModel<f32>;
pub type Ensemble32 = fusion::FusionEnsemble<f32>;
