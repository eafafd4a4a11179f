//! Minimal layer-stack engine over `[batch, ...]` tensors.
//!
//! Convolutional stages work on `[batch, time, column, feature]`; the dense
//! head on `[batch, features]`; the LSTM on `[batch, time, features]`.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod layer;
pub mod loss;
pub mod lstm;
pub mod network;
pub mod norm;
pub mod optim;
pub mod pool;
pub mod tensor;

pub use activation::{softmax, Dropout, Relu, Softmax};
pub use conv::{Conv2d, Padding};
pub use dense::{Dense, Flatten};
pub use layer::{glorot_uniform, Layer, LayerKind, LayerSpec};
pub use loss::{cross_entropy, cross_entropy_grad, one_hot, softmax_cross_entropy_grad};
pub use lstm::Lstm;
pub use network::Network;
pub use norm::BatchNorm;
pub use optim::{sgd_step, Sgd};
pub use pool::MaxPool;
pub use tensor::{Param, Tensor};
