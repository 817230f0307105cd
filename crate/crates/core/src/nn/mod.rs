//! The differentiable-classifier engine: value types, network specs,
//! forward/backward evaluation, SGD, gradient-check oracles, and the
//! checkpoint container.

pub mod checkpoint;
mod classifier;
pub mod gradcheck;
mod spec;
pub mod train;
mod types;

pub use classifier::{Classifier, DifferentiableClassifier, PROB_FLOOR};
pub use spec::{Layer, NetworkSpec, Shape, CONV_KERNEL, POOL_WINDOW};
pub use train::{fit, hard_examples, EpochStats, TrainParams};
pub use types::{FeatureVector, LossTarget, ProbabilityVector, PROB_SUM_TOLERANCE};
