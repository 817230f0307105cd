//! Flat `key = value` experiment configuration with `#` comments.
//!
//! One seed drives every stochastic choice downstream, so a re-run with the
//! same config file reproduces every output byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Which dataset the experiment runs on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetKind {
    Digits,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DefenseKind {
    None,
    Robust0,
    RobustInf,
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThreatKind {
    Blind,
    BlackBox,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackChoice {
    Grad0,
    Fgs,
    Greedy,
}

/// Everything a pipeline run needs; unspecified keys take the defaults here.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    pub blob_dims: usize,
    pub blob_classes: usize,
    pub blob_separation: f64,

    pub network: String,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,

    pub defense: DefenseKind,
    pub alpha: f64,
    pub q: f64,
    pub epsilon: f64,
    pub initial_epochs: usize,
    pub adversarial_epochs: usize,

    pub threat: ThreatKind,
    pub attack: AttackChoice,
    pub epsilon_grid: Vec<f64>,
    pub adversary_train: usize,
    pub adversary_validation: usize,
    pub substitute_epochs: usize,
    pub adversarial_rounds: usize,
    pub null_handling: String,

    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Digits,
            train_samples: 10_000,
            validation_samples: 1_000,
            test_samples: 2_000,
            blob_dims: 8,
            blob_classes: 3,
            blob_separation: 6.0,
            network: "desk-mlp".to_string(),
            seed: 42,
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 12,
            defense: DefenseKind::None,
            alpha: 0.5,
            q: 0.9,
            epsilon: 0.1,
            initial_epochs: 1,
            adversarial_epochs: 30,
            threat: ThreatKind::Blind,
            attack: AttackChoice::Grad0,
            epsilon_grid: vec![0.025, 0.05, 0.10, 0.15, 0.20],
            adversary_train: 100,
            adversary_validation: 50,
            substitute_epochs: 50,
            adversarial_rounds: 5,
            null_handling: "augment".to_string(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected 'key = value'", lineno + 1))?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_pairs(pairs)
    }

    fn from_pairs(pairs: BTreeMap<String, String>) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (key, value) in pairs {
            match key.as_str() {
                "dataset" => {
                    config.dataset = match value.as_str() {
                        "digits" => DatasetKind::Digits,
                        "blobs" => DatasetKind::Blobs,
                        other => bail!("config key 'dataset': unknown value '{other}'"),
                    }
                }
                "train_samples" => config.train_samples = parse(&key, &value)?,
                "validation_samples" => config.validation_samples = parse(&key, &value)?,
                "test_samples" => config.test_samples = parse(&key, &value)?,
                "blob_dims" => config.blob_dims = parse(&key, &value)?,
                "blob_classes" => config.blob_classes = parse(&key, &value)?,
                "blob_separation" => config.blob_separation = parse(&key, &value)?,
                "network" => config.network = value,
                "seed" => config.seed = parse(&key, &value)?,
                "learning_rate" => config.learning_rate = parse(&key, &value)?,
                "batch_size" => config.batch_size = parse(&key, &value)?,
                "epochs" => config.epochs = parse(&key, &value)?,
                "defense" => {
                    config.defense = match value.as_str() {
                        "none" => DefenseKind::None,
                        "robust0" => DefenseKind::Robust0,
                        "robustinf" => DefenseKind::RobustInf,
                        "null" => DefenseKind::Null,
                        other => bail!("config key 'defense': unknown value '{other}'"),
                    }
                }
                "alpha" => config.alpha = parse(&key, &value)?,
                "q" => config.q = parse(&key, &value)?,
                "epsilon" => config.epsilon = parse(&key, &value)?,
                "initial_epochs" => config.initial_epochs = parse(&key, &value)?,
                "adversarial_epochs" => config.adversarial_epochs = parse(&key, &value)?,
                "threat" => {
                    config.threat = match value.as_str() {
                        "blind" => ThreatKind::Blind,
                        "blackbox" => ThreatKind::BlackBox,
                        other => bail!("config key 'threat': unknown value '{other}'"),
                    }
                }
                "attack" => {
                    config.attack = match value.as_str() {
                        "grad0" => AttackChoice::Grad0,
                        "fgs" => AttackChoice::Fgs,
                        "greedy" => AttackChoice::Greedy,
                        other => bail!("config key 'attack': unknown value '{other}'"),
                    }
                }
                "epsilon_grid" => {
                    config.epsilon_grid = value
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|_| anyhow!("config key 'epsilon_grid': bad value '{v}'"))
                        })
                        .collect::<Result<_>>()?;
                }
                "adversary_train" => config.adversary_train = parse(&key, &value)?,
                "adversary_validation" => config.adversary_validation = parse(&key, &value)?,
                "substitute_epochs" => config.substitute_epochs = parse(&key, &value)?,
                "adversarial_rounds" => config.adversarial_rounds = parse(&key, &value)?,
                "null_handling" => {
                    if value != "augment" && value != "discard" {
                        bail!("config key 'null_handling': unknown value '{value}'");
                    }
                    config.null_handling = value;
                }
                "out" => config.out = Some(value),
                other => bail!("unknown config key '{other}'"),
            }
        }
        Ok(config)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("config key '{key}': cannot parse value '{value}'"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_defaults() {
        let config = ExperimentConfig::from_str(
            "# experiment\n\
             dataset = blobs\n\
             seed = 7   # reproducibility\n\
             epsilon_grid = 0.05, 0.1\n",
        )
        .unwrap();
        assert_eq!(config.dataset, DatasetKind::Blobs);
        assert_eq!(config.seed, 7);
        assert_eq!(config.epsilon_grid, vec![0.05, 0.1]);
        assert_eq!(config.batch_size, 32); // default preserved
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = ExperimentConfig::from_str("not_a_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("not_a_key"));
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = ExperimentConfig::from_str("seed = banana\n").unwrap_err();
        assert!(err.to_string().contains("seed"));
    }
}
