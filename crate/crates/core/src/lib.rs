//! Training, attacking, and defending small image classifiers.
//!
//! The crate is organized around a from-scratch differentiable classifier
//! engine ([`nn`]) and the machinery built on top of it:
//!
//! - [`attacks`] — gradient-based adversarial example generation under
//!   L0 and L-infinity budgets (`grad0`, `fgs`, `mg`, `greedy_targeted`,
//!   `stg`).
//! - [`defense`] — NULL-labeling training that teaches a classifier to
//!   route perturbed inputs to an extra NULL class, plus robust-training
//!   baselines.
//! - [`threat`] — black-box and blind adversary models: substitute
//!   classifier training, the label-only oracle boundary, and its
//!   JSON-lines wire protocol.
//! - [`eval`] — accuracy, attack success, and transferability metrics
//!   with NULL-aware success semantics.
//! - [`data`] — IDX ingestion, image preprocessing, and synthetic
//!   datasets for fast, deterministic experiments.

pub mod attacks;
pub mod data;
pub mod defense;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod threat;

pub use error::{Error, Result};
