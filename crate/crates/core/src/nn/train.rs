//! Mini-batch SGD.
//!
//! The shuffle and dropout streams are derived from `(seed, label, epoch)`,
//! and the robust-training loop in `defense` reuses the same labels, so a
//! robust run with `alpha = 1` walks the exact parameter trajectory of a
//! plain run.

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::nn::classifier::Classifier;
use crate::nn::types::{FeatureVector, LossTarget};
use crate::rng::stream;

pub(crate) const SHUFFLE_LABEL: &str = "sgd-shuffle";
pub(crate) const DROPOUT_LABEL: &str = "sgd-dropout";

/// Optimizer settings shared by every training loop.
#[derive(Debug, Clone)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.1,
            batch_size: 32,
        }
    }
}

/// Per-epoch training record, serialized into training-log CSVs.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub clean_loss: f64,
    pub adversarial_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

/// Epoch-local sample order.
pub(crate) fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, SHUFFLE_LABEL, epoch as u64));
    order
}

/// Trains on `(input, target)` examples for `epochs` passes.
pub fn fit(
    classifier: &mut Classifier,
    examples: &[(FeatureVector, LossTarget)],
    epochs: usize,
    params: &TrainParams,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    let mut stats = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let order = shuffled_indices(examples.len(), seed, epoch);
        let mut dropout_rng = stream(seed, DROPOUT_LABEL, epoch as u64);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(params.batch_size.max(1)) {
            let batch: Vec<(FeatureVector, LossTarget)> = chunk
                .iter()
                .map(|&i| examples[i].clone())
                .collect();
            let (grad, loss) = classifier.param_gradient_train(&batch, &mut dropout_rng)?;
            classifier.sgd_step(&grad, params.learning_rate)?;
            loss_sum += loss;
            batches += 1;
        }
        stats.push(EpochStats {
            epoch,
            clean_loss: loss_sum / batches.max(1) as f64,
            adversarial_loss: None,
            validation_accuracy: None,
        });
    }
    Ok(stats)
}

/// Convenience wrapper: hard-label training examples.
pub fn hard_examples(samples: &[(FeatureVector, usize)]) -> Vec<(FeatureVector, LossTarget)> {
    samples
        .iter()
        .map(|(x, y)| (x.clone(), LossTarget::Label(*y)))
        .collect()
}
