//! The clean-graph predictor: feature extraction, a message-passing network
//! with exact gradients, and its cross-entropy training loop.

pub mod features;
pub mod model;
pub mod train;

pub use features::{extract_features, FeatureTensor};
pub use model::{loss, CleanPrediction, DenoiserHyper, DenoiserModel, LossParts};
pub use train::{batch_grad, train, TrainConfig, TrainOutcome};
