//! NULL-labeling defense and robust-training baselines.
//!
//! NULL training runs in three phases: clean training on label-smoothed
//! targets, a one-time computation of the NULL-probability function `f` on
//! validation data, and adversarial training in which each sample either
//! trains clean (probability `alpha`) or as an STG perturbation whose target
//! moves `f(n / |X|)` probability mass onto the NULL slot. The parameters
//! with the best validation accuracy over the run are returned.

mod null_fn;
mod targets;

pub use null_fn::{compute_null_fn, NullProbabilityFn};
pub use targets::{adversarial_target, smoothed_clean_target, AdversarialTarget};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attacks::{fgs, grad0, stg, AttackBudget, Norm};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::train::{shuffled_indices, DROPOUT_LABEL};
use crate::nn::{
    fit, Classifier, DifferentiableClassifier, EpochStats, FeatureVector, LossTarget,
    NetworkSpec, TrainParams,
};
use crate::rng::stream;

/// NULL-training hyperparameters.
#[derive(Debug, Clone)]
pub struct DefenseConfig {
    /// Probability of training on the clean sample instead of its
    /// adversarial counterpart.
    pub alpha: f64,
    /// Label-smoothing mass kept on the ground truth.
    pub q: f64,
    pub initial_epochs: usize,
    pub adversarial_epochs: usize,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            alpha: 0.5,
            q: 0.9,
            initial_epochs: 1,
            adversarial_epochs: 30,
        }
    }
}

impl DefenseConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha {} must lie in [0, 1]", self.alpha)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::config(format!("q {} must lie in (0, 1]", self.q)));
        }
        Ok(())
    }
}

/// Robust-training settings: the adversarial term's weight, norm, and budget.
#[derive(Debug, Clone)]
pub struct RobustConfig {
    pub alpha: f64,
    pub norm: Norm,
    pub epsilon: f64,
    pub epochs: usize,
}

/// Everything NULL training produces.
#[derive(Debug, Clone)]
pub struct NullTrainOutcome {
    pub classifier: Classifier,
    pub null_fn: NullProbabilityFn,
    pub stats: Vec<EpochStats>,
}

/// Default cap on MG flips when computing `f`: half the input features.
pub fn default_feature_cap(input_dim: usize) -> usize {
    input_dim.div_ceil(2)
}

/// Plain hard-label training from a fresh seeded initialization.
pub fn train_baseline(
    train: &Dataset,
    spec: &NetworkSpec,
    opt: &TrainParams,
    epochs: usize,
    seed: u64,
) -> Result<(Classifier, Vec<EpochStats>)> {
    let mut classifier = Classifier::new(spec.clone(), seed)?;
    let examples: Vec<(FeatureVector, LossTarget)> = train
        .samples
        .iter()
        .map(|s| (s.x.clone(), LossTarget::Label(s.y)))
        .collect();
    let stats = fit(&mut classifier, &examples, epochs, opt, seed)?;
    Ok((classifier, stats))
}

/// Adversarially robust training: every step blends the clean-batch gradient
/// with the gradient on adversarial examples regenerated against the current
/// parameters, weighted `alpha` to `1 - alpha`. With `alpha = 1` the loop
/// reduces to [`train_baseline`] exactly.
pub fn robust_train(
    train: &Dataset,
    config: &RobustConfig,
    spec: &NetworkSpec,
    opt: &TrainParams,
    seed: u64,
) -> Result<(Classifier, Vec<EpochStats>)> {
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(Error::config(format!(
            "alpha {} must lie in [0, 1]",
            config.alpha
        )));
    }
    let budget = AttackBudget::new(config.norm, config.epsilon)?;
    let mut classifier = Classifier::new(spec.clone(), seed)?;
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = shuffled_indices(train.len(), seed, epoch);
        let mut dropout_rng = stream(seed, DROPOUT_LABEL, epoch as u64);
        let mut clean_loss = 0.0;
        let mut adv_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(opt.batch_size.max(1)) {
            let clean_batch: Vec<(FeatureVector, LossTarget)> = chunk
                .iter()
                .map(|&i| {
                    let s = &train.samples[i];
                    (s.x.clone(), LossTarget::Label(s.y))
                })
                .collect();
            let (clean_grad, batch_clean_loss) =
                classifier.param_gradient_train(&clean_batch, &mut dropout_rng)?;
            clean_loss += batch_clean_loss;
            if config.alpha < 1.0 {
                // Regenerate adversarial examples against the current
                // parameters; infeasible attempts train on the perturbed
                // vector as produced.
                let adv_batch: Vec<(FeatureVector, LossTarget)> = chunk
                    .par_iter()
                    .map(|&i| {
                        let s = &train.samples[i];
                        let result = match config.norm {
                            Norm::L0 => grad0(&classifier, &s.x, s.y, &budget)?,
                            Norm::Linf => fgs(&classifier, &s.x, s.y, &budget)?,
                        };
                        Ok((result.x_star, LossTarget::Label(s.y)))
                    })
                    .collect::<Result<_>>()?;
                let (adv_grad, batch_adv_loss) =
                    classifier.param_gradient_train(&adv_batch, &mut dropout_rng)?;
                adv_loss += batch_adv_loss;
                let blended: Vec<f64> = clean_grad
                    .iter()
                    .zip(&adv_grad)
                    .map(|(c, a)| config.alpha * c + (1.0 - config.alpha) * a)
                    .collect();
                classifier.sgd_step(&blended, opt.learning_rate)?;
            } else {
                classifier.sgd_step(&clean_grad, opt.learning_rate)?;
            }
            batches += 1;
        }
        let n = batches.max(1) as f64;
        stats.push(EpochStats {
            epoch,
            clean_loss: clean_loss / n,
            adversarial_loss: (config.alpha < 1.0).then_some(adv_loss / n),
            validation_accuracy: None,
        });
    }
    Ok((classifier, stats))
}

/// Per-sample branch plan for one adversarial epoch: `None` trains clean,
/// `Some(n)` trains on an STG perturbation of `n` features.
pub(crate) fn plan_epoch(
    rng: &mut ChaCha8Rng,
    samples: usize,
    alpha: f64,
    n_max: usize,
) -> Vec<Option<usize>> {
    (0..samples)
        .map(|_| {
            if rng.gen::<f64>() < alpha {
                None
            } else {
                Some(rng.gen_range(1..=n_max))
            }
        })
        .collect()
}

/// Fraction of samples the model labels correctly; a NULL prediction on
/// clean data is an error.
pub(crate) fn clean_accuracy<M>(model: &M, data: &Dataset) -> Result<f64>
where
    M: DifferentiableClassifier + Sync,
{
    if data.is_empty() {
        return Err(Error::argument("accuracy over an empty set"));
    }
    let correct: usize = data
        .samples
        .par_iter()
        .map(|s| Ok(usize::from(model.predict(&s.x)? == s.y)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / data.len() as f64)
}

/// The full NULL-labeling training pipeline.
pub fn null_train(
    train: &Dataset,
    validation: &Dataset,
    config: &DefenseConfig,
    spec: &NetworkSpec,
    opt: &TrainParams,
    seed: u64,
) -> Result<NullTrainOutcome> {
    config.validate()?;
    if !spec.has_null {
        return Err(Error::config("NULL training needs a spec with a NULL slot"));
    }
    let valid_classes = spec.valid_class_count();
    if valid_classes != train.class_count {
        return Err(Error::config(format!(
            "spec has {valid_classes} valid classes, dataset has {}",
            train.class_count
        )));
    }
    if validation.is_empty() {
        return Err(Error::argument("NULL training needs validation data"));
    }

    let mut classifier = Classifier::new(spec.clone(), seed)?;
    let smoothed: Vec<LossTarget> = (0..valid_classes)
        .map(|y| {
            smoothed_clean_target(y, valid_classes, config.q, true).map(LossTarget::Distribution)
        })
        .collect::<Result<_>>()?;

    // Phase 1: clean training on smoothed targets.
    let clean_examples: Vec<(FeatureVector, LossTarget)> = train
        .samples
        .iter()
        .map(|s| (s.x.clone(), smoothed[s.y].clone()))
        .collect();
    let mut stats = fit(
        &mut classifier,
        &clean_examples,
        config.initial_epochs,
        opt,
        seed,
    )?;

    // Phase 2: compute f once on the initially trained classifier and keep
    // it frozen for the whole adversarial phase.
    let cap = default_feature_cap(train.input_len());
    let null_fn = compute_null_fn(&classifier, validation, cap)?;
    if null_fn.n_max() == 0 {
        return Err(Error::config(
            "NULL-probability function reaches 1 at zero features; validation data is \
             already misclassified",
        ));
    }

    // Adversarial targets per (class, feature count).
    let n_max = null_fn.n_max();
    let adv_targets: Vec<Vec<LossTarget>> = (0..valid_classes)
        .map(|y| {
            (1..=n_max)
                .map(|n| {
                    adversarial_target(y, valid_classes, config.q, null_fn.at_count(n))
                        .map(|t| LossTarget::Distribution(t.probs))
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut best_params = classifier.params().to_vec();
    let mut best_acc = clean_accuracy(&classifier, validation)?;
    if let Some(last) = stats.last_mut() {
        last.validation_accuracy = Some(best_acc);
    }

    // Phase 3: mixed clean/adversarial training.
    for epoch in 0..config.adversarial_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut stream(seed, "null-shuffle", epoch as u64));
        }
        let plan = plan_epoch(
            &mut stream(seed, "null-branch", epoch as u64),
            order.len(),
            config.alpha,
            n_max,
        );
        let mut dropout_rng = stream(seed, "null-dropout", epoch as u64);
        let mut clean_loss_sum = 0.0;
        let mut clean_count = 0usize;
        let mut adv_loss_sum = 0.0;
        let mut adv_count = 0usize;
        for (chunk_start, chunk) in order
            .chunks(opt.batch_size.max(1))
            .enumerate()
            .map(|(b, c)| (b * opt.batch_size.max(1), c))
        {
            let mut clean_batch = Vec::new();
            let mut adv_requests = Vec::new();
            for (offset, &sample_idx) in chunk.iter().enumerate() {
                let s = &train.samples[sample_idx];
                match plan[chunk_start + offset] {
                    None => clean_batch.push((s.x.clone(), smoothed[s.y].clone())),
                    Some(n) => adv_requests.push((sample_idx, n)),
                }
            }
            let adv_batch: Vec<(FeatureVector, LossTarget)> = adv_requests
                .par_iter()
                .map(|&(sample_idx, n)| {
                    let s = &train.samples[sample_idx];
                    let x_star = stg(&classifier, &s.x, n)?;
                    Ok((x_star, adv_targets[s.y][n - 1].clone()))
                })
                .collect::<Result<_>>()?;

            let mut grad: Option<Vec<f64>> = None;
            let total = clean_batch.len() + adv_batch.len();
            if !clean_batch.is_empty() {
                let (g, l) = classifier.param_gradient_train(&clean_batch, &mut dropout_rng)?;
                clean_loss_sum += l * clean_batch.len() as f64;
                clean_count += clean_batch.len();
                let w = clean_batch.len() as f64 / total as f64;
                grad = Some(g.into_iter().map(|v| v * w).collect());
            }
            if !adv_batch.is_empty() {
                let (g, l) = classifier.param_gradient_train(&adv_batch, &mut dropout_rng)?;
                adv_loss_sum += l * adv_batch.len() as f64;
                adv_count += adv_batch.len();
                let w = adv_batch.len() as f64 / total as f64;
                grad = Some(match grad {
                    Some(mut acc) => {
                        for (a, v) in acc.iter_mut().zip(&g) {
                            *a += v * w;
                        }
                        acc
                    }
                    None => g.into_iter().map(|v| v * w).collect(),
                });
            }
            if let Some(g) = grad {
                classifier.sgd_step(&g, opt.learning_rate)?;
            }
        }
        // Ties prefer the latest snapshot, so saturated validation accuracy
        // does not pin the selection to the pre-adversarial parameters.
        let acc = clean_accuracy(&classifier, validation)?;
        if acc >= best_acc {
            best_acc = acc;
            best_params = classifier.params().to_vec();
        }
        stats.push(EpochStats {
            epoch: config.initial_epochs + epoch,
            clean_loss: clean_loss_sum / clean_count.max(1) as f64,
            adversarial_loss: (adv_count > 0).then(|| adv_loss_sum / adv_count as f64),
            validation_accuracy: Some(acc),
        });
    }

    let classifier = Classifier::from_parts(spec.clone(), best_params, seed)?;
    Ok(NullTrainOutcome {
        classifier,
        null_fn,
        stats,
    })
}

#[cfg(test)]
mod tests;
