//! Core value types shared by every module: feature vectors, probability
//! vectors, and loss targets.

use crate::error::{Error, Result};

/// A flat input vector with every element in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Validates the `[0, 1]` bound on every element.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::argument(format!(
                    "feature {i} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(FeatureVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }

    /// Sets one coordinate; the new value must stay in `[0, 1]`.
    pub fn set(&mut self, index: usize, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.0[index] = value;
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A discrete distribution over `class_count` classes, with an optional
/// NULL slot at a known index.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
    null_index: Option<usize>,
}

/// Absolute tolerance on the sum-to-one invariant.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

impl ProbabilityVector {
    /// Validates non-negativity and sum-to-one (within [`PROB_SUM_TOLERANCE`]).
    pub fn new(probs: Vec<f64>, null_index: Option<usize>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::argument("probability vector cannot be empty"));
        }
        if let Some(n) = null_index {
            if n >= probs.len() {
                return Err(Error::argument(format!(
                    "null index {n} out of range for {} classes",
                    probs.len()
                )));
            }
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Numeric(format!("probability {i} is not finite")));
            }
            if p < 0.0 {
                return Err(Error::argument(format!("probability {i} = {p} is negative")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::argument(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbabilityVector { probs, null_index })
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }

    pub fn null_index(&self) -> Option<usize> {
        self.null_index
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, class: usize) -> f64 {
        self.probs[class]
    }

    /// Index of the largest probability; ties break toward the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Lowest-index argmax over a non-empty slice.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// What the loss compares the prediction against: a hard class index or a
/// full target distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum LossTarget {
    Label(usize),
    Distribution(ProbabilityVector),
}

impl LossTarget {
    /// The target written as a dense vector over `class_count` classes.
    pub fn dense(&self, class_count: usize) -> Result<Vec<f64>> {
        match self {
            LossTarget::Label(y) => {
                if *y >= class_count {
                    return Err(Error::argument(format!(
                        "label {y} out of range for {class_count} classes"
                    )));
                }
                let mut t = vec![0.0; class_count];
                t[*y] = 1.0;
                Ok(t)
            }
            LossTarget::Distribution(p) => {
                if p.class_count() != class_count {
                    return Err(Error::Dimension {
                        expected: class_count,
                        got: p.class_count(),
                    });
                }
                Ok(p.values().to_vec())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_vector_rejects_out_of_range() {
        assert!(FeatureVector::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(FeatureVector::new(vec![-0.1]).is_err());
        assert!(FeatureVector::new(vec![1.1]).is_err());
    }

    #[test]
    fn probability_vector_validates() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5], None).is_ok());
        assert!(ProbabilityVector::new(vec![0.6, 0.6], None).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1], None).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.5], Some(2)).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let p = ProbabilityVector::new(vec![0.5, 0.5], None).unwrap();
        assert_eq!(p.argmax(), 0);
        let p = ProbabilityVector::new(vec![0.1, 0.7, 0.2], None).unwrap();
        assert_eq!(p.argmax(), 1);
        let uniform = ProbabilityVector::new(vec![0.1; 10], None).unwrap();
        assert_eq!(uniform.argmax(), 0);
    }

    #[test]
    fn one_hot_distribution_matches_label() {
        let t = LossTarget::Label(2).dense(4).unwrap();
        assert_eq!(t, vec![0.0, 0.0, 1.0, 0.0]);
        let d = LossTarget::Distribution(
            ProbabilityVector::new(vec![0.0, 0.0, 1.0, 0.0], None).unwrap(),
        );
        assert_eq!(d.dense(4).unwrap(), t);
    }
}
