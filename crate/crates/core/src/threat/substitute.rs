//! Substitute-classifier training under the blind and black-box models, and
//! transfer-set generation.
//!
//! The blind adversary trains once on their small labeled set and never
//! contacts the target. The black-box adversary alternates: per round,
//! adversarial examples generated on the current substitute are labeled by
//! querying the oracle, then the substitute trains one epoch on clean data
//! and one on the cumulative oracle-labeled pool.

use rand::Rng;
use rayon::prelude::*;

use crate::attacks::{
    fgs, grad0, greedy_targeted, AdversarialRecord, AttackBudget, Norm,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    fit, Classifier, DifferentiableClassifier, FeatureVector, Layer, LossTarget, NetworkSpec,
    TrainParams,
};
use crate::rng::stream;
use crate::threat::Oracle;

/// The adversary's labeled data: a small training set and a validation set,
/// disjoint from the target's training pipeline.
#[derive(Debug, Clone)]
pub struct AdversaryDataset {
    pub train: Dataset,
    pub validation: Dataset,
}

impl AdversaryDataset {
    /// Carves the adversary's data from the front of a source split
    /// (typically the target's validation split).
    pub fn carve(source: &Dataset, train_n: usize, validation_n: usize) -> Result<Self> {
        if source.len() < train_n + validation_n {
            return Err(Error::argument(format!(
                "need {} samples to carve, source has {}",
                train_n + validation_n,
                source.len()
            )));
        }
        Ok(AdversaryDataset {
            train: source.slice(0..train_n)?,
            validation: source.slice(train_n..train_n + validation_n)?,
        })
    }
}

/// What to do with oracle responses that report the NULL label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullHandling {
    /// Drop those samples from the pool.
    Discard,
    /// Give the substitute its own NULL output and train toward it.
    Augment,
}

/// Black-box training schedule.
#[derive(Debug, Clone)]
pub struct SubstituteSchedule {
    pub initial_epochs: usize,
    pub adversarial_rounds: usize,
    /// Perturbation fractions sampled per generated example.
    pub epsilon_grid: Vec<f64>,
    pub null_handling: NullHandling,
}

impl Default for SubstituteSchedule {
    fn default() -> Self {
        SubstituteSchedule {
            initial_epochs: 50,
            adversarial_rounds: 50,
            epsilon_grid: vec![0.025, 0.05, 0.10, 0.15, 0.20],
            null_handling: NullHandling::Augment,
        }
    }
}

impl SubstituteSchedule {
    fn validate(&self) -> Result<()> {
        if self.epsilon_grid.is_empty() {
            return Err(Error::config("epsilon grid cannot be empty"));
        }
        for &e in &self.epsilon_grid {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::config(format!("epsilon {e} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Blind-model substitute: initial training only, no oracle contact.
pub fn train_substitute_blind(
    data: &AdversaryDataset,
    spec: &NetworkSpec,
    opt: &TrainParams,
    epochs: usize,
    seed: u64,
) -> Result<Classifier> {
    if data.train.is_empty() {
        return Err(Error::argument("adversary has no training data"));
    }
    let mut classifier = Classifier::new(spec.clone(), seed)?;
    let examples: Vec<(FeatureVector, LossTarget)> = data
        .train
        .samples
        .iter()
        .map(|s| (s.x.clone(), LossTarget::Label(s.y)))
        .collect();
    fit(&mut classifier, &examples, epochs, opt, seed)?;
    Ok(classifier)
}

/// Counters from one black-box round.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundStats {
    pub generated: usize,
    pub null_responses: usize,
}

/// Resumable black-box training state. The oracle-labeled pool is cumulative
/// across rounds and survives a failed round, so a caller can retry after a
/// transport error without losing paid-for labels.
pub struct BlackBoxSession {
    data: AdversaryDataset,
    substitute: Classifier,
    schedule: SubstituteSchedule,
    opt: TrainParams,
    seed: u64,
    round: usize,
    pool: Vec<(FeatureVector, usize)>,
}

impl BlackBoxSession {
    pub fn new(
        data: AdversaryDataset,
        spec: &NetworkSpec,
        schedule: SubstituteSchedule,
        opt: TrainParams,
        seed: u64,
    ) -> Result<Self> {
        schedule.validate()?;
        let spec = match schedule.null_handling {
            NullHandling::Augment => augment_spec(spec)?,
            NullHandling::Discard => spec.clone(),
        };
        let mut substitute = Classifier::new(spec, seed)?;
        let examples: Vec<(FeatureVector, LossTarget)> = data
            .train
            .samples
            .iter()
            .map(|s| (s.x.clone(), LossTarget::Label(s.y)))
            .collect();
        fit(&mut substitute, &examples, schedule.initial_epochs, &opt, seed)?;
        Ok(BlackBoxSession {
            data,
            substitute,
            schedule,
            opt,
            seed,
            round: 0,
            pool: Vec::new(),
        })
    }

    pub fn substitute(&self) -> &Classifier {
        &self.substitute
    }

    pub fn into_substitute(self) -> Classifier {
        self.substitute
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn rounds_run(&self) -> usize {
        self.round
    }

    /// One adversarial round: generate, query, absorb labels, then train one
    /// epoch on clean data and one on the pool. Aborts on the first oracle
    /// failure; labels received before the failure stay in the pool.
    pub fn run_round(&mut self, oracle: &dyn Oracle) -> Result<RoundStats> {
        let round = self.round as u64;
        let mut eps_rng = stream(self.seed, "blackbox-eps", round);
        let mut stats = RoundStats::default();
        let substitute_null = self.substitute.null_index();
        let valid_classes = self.data.train.class_count;

        // Generation is deterministic given the epsilon draws; parallelize
        // generation, then query sequentially in sample order.
        let draws: Vec<f64> = (0..self.data.train.len())
            .map(|_| {
                let i = eps_rng.gen_range(0..self.schedule.epsilon_grid.len());
                self.schedule.epsilon_grid[i]
            })
            .collect();
        let generated: Vec<(usize, FeatureVector)> = self
            .data
            .train
            .samples
            .par_iter()
            .enumerate()
            .map(|(idx, s)| {
                let budget = AttackBudget::l0(draws[idx])?;
                let result = grad0(&self.substitute, &s.x, s.y, &budget)?;
                Ok((idx, result.x_star))
            })
            .collect::<Result<_>>()?;

        for (_, x_star) in &generated {
            let label = oracle.query(x_star)?;
            stats.generated += 1;
            if label >= valid_classes {
                stats.null_responses += 1;
                match self.schedule.null_handling {
                    NullHandling::Discard => continue,
                    NullHandling::Augment => {
                        let null_label = substitute_null
                            .expect("augmented substitute has a NULL slot");
                        self.pool.push((x_star.clone(), null_label));
                    }
                }
            } else {
                self.pool.push((x_star.clone(), label));
            }
        }

        // Alternate: one clean epoch, then one pool epoch.
        let clean: Vec<(FeatureVector, LossTarget)> = self
            .data
            .train
            .samples
            .iter()
            .map(|s| (s.x.clone(), LossTarget::Label(s.y)))
            .collect();
        fit(
            &mut self.substitute,
            &clean,
            1,
            &self.opt,
            derive_round_seed(self.seed, "clean-epoch", round),
        )?;
        if !self.pool.is_empty() {
            let pool: Vec<(FeatureVector, LossTarget)> = self
                .pool
                .iter()
                .map(|(x, y)| (x.clone(), LossTarget::Label(*y)))
                .collect();
            fit(
                &mut self.substitute,
                &pool,
                1,
                &self.opt,
                derive_round_seed(self.seed, "pool-epoch", round),
            )?;
        }
        self.round += 1;
        Ok(stats)
    }
}

fn derive_round_seed(seed: u64, label: &str, round: u64) -> u64 {
    stream(seed, label, round).gen()
}

/// Black-box substitute training: initial training plus the scheduled
/// number of adversarial rounds against `oracle`.
pub fn train_substitute_blackbox(
    data: &AdversaryDataset,
    oracle: &dyn Oracle,
    spec: &NetworkSpec,
    schedule: &SubstituteSchedule,
    opt: &TrainParams,
    seed: u64,
) -> Result<(Classifier, Vec<RoundStats>)> {
    let mut session = BlackBoxSession::new(
        data.clone(),
        spec,
        schedule.clone(),
        opt.clone(),
        seed,
    )?;
    let mut stats = Vec::with_capacity(schedule.adversarial_rounds);
    for _ in 0..schedule.adversarial_rounds {
        stats.push(session.run_round(oracle)?);
    }
    Ok((session.into_substitute(), stats))
}

/// Adds a NULL output slot to a spec by widening its final dense layer.
pub fn augment_spec(spec: &NetworkSpec) -> Result<NetworkSpec> {
    if spec.has_null {
        return Ok(spec.clone());
    }
    let mut layers = spec.layers.clone();
    let last_dense = layers
        .iter()
        .rposition(|l| matches!(l, Layer::Dense { .. }))
        .ok_or_else(|| Error::config("cannot augment a spec without a dense output layer"))?;
    if let Layer::Dense { units } = &mut layers[last_dense] {
        *units += 1;
    }
    NetworkSpec::new(layers, spec.input_shape, spec.class_count + 1, true)
}

/// Attack flavor for transfer-set generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    MisclassifyGrad0,
    MisclassifyFgs,
    TargetedGreedy,
}

/// One transfer-set element: the persisted adversarial record plus the
/// intended target label for targeted attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferExample {
    pub record: AdversarialRecord,
    pub intended_target: Option<usize>,
}

/// A generated transfer set and the number of samples actually attacked.
#[derive(Debug, Clone, Default)]
pub struct TransferSet {
    /// Only results feasible on the substitute; these are what transfer to
    /// the target.
    pub examples: Vec<TransferExample>,
    pub attempts: usize,
}

/// Attacks every correctly classified clean sample on the substitute and
/// keeps the feasible results. Targeted generation needs one target label
/// per clean sample, each different from the sample's own label.
pub fn generate_transfer_set<M>(
    substitute: &M,
    clean_samples: &Dataset,
    kind: AttackKind,
    epsilon: f64,
    target_labels: Option<&[usize]>,
) -> Result<TransferSet>
where
    M: DifferentiableClassifier + Sync,
{
    if kind == AttackKind::TargetedGreedy {
        let targets = target_labels
            .ok_or_else(|| Error::argument("targeted generation needs target labels"))?;
        if targets.len() != clean_samples.len() {
            return Err(Error::Dimension {
                expected: clean_samples.len(),
                got: targets.len(),
            });
        }
        for (i, s) in clean_samples.samples.iter().enumerate() {
            if targets[i] == s.y {
                return Err(Error::argument(format!(
                    "sample {i}: target label equals the original label"
                )));
            }
        }
    }

    let outcomes: Vec<Option<TransferExample>> = clean_samples
        .samples
        .par_iter()
        .enumerate()
        .map(|(idx, s)| -> Result<Option<TransferExample>> {
            // Attacks start from correctly handled inputs.
            if substitute.predict(&s.x)? != s.y {
                return Ok(None);
            }
            let (norm, result, intended) = match kind {
                AttackKind::MisclassifyGrad0 => {
                    let budget = AttackBudget::l0(epsilon)?;
                    (Norm::L0, grad0(substitute, &s.x, s.y, &budget)?, None)
                }
                AttackKind::MisclassifyFgs => {
                    let budget = AttackBudget::linf(epsilon)?;
                    (Norm::Linf, fgs(substitute, &s.x, s.y, &budget)?, None)
                }
                AttackKind::TargetedGreedy => {
                    let target = target_labels.expect("validated above")[idx];
                    let max_features =
                        AttackBudget::l0(epsilon)?.l0_feature_budget(s.x.len());
                    (
                        Norm::L0,
                        greedy_targeted(substitute, &s.x, target, max_features)?,
                        Some(target),
                    )
                }
            };
            Ok(Some(TransferExample {
                record: AdversarialRecord {
                    sample_id: idx,
                    norm,
                    epsilon,
                    result,
                },
                intended_target: intended,
            }))
        })
        .collect::<Result<_>>()?;

    let mut set = TransferSet::default();
    for outcome in outcomes.into_iter().flatten() {
        set.attempts += 1;
        if outcome.record.result.feasible {
            set.examples.push(outcome);
        }
    }
    Ok(set)
}
