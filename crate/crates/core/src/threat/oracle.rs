//! The label-only oracle boundary between attacker and target.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;
use crate::nn::{Classifier, DifferentiableClassifier, FeatureVector};

/// A target system exposed solely as an input-to-label query interface.
/// Labels are all an oracle ever returns; a NULL-defended target reports its
/// NULL slot as the ordinary label value `K`.
pub trait Oracle: Send + Sync {
    fn query(&self, x: &FeatureVector) -> Result<usize>;
    /// Total successful queries served, incremented exactly once per query.
    fn query_count(&self) -> u64;
}

/// Oracle wrapping a classifier in the same process.
pub struct InProcessOracle {
    classifier: Classifier,
    count: AtomicU64,
}

impl InProcessOracle {
    pub fn new(classifier: Classifier) -> Self {
        InProcessOracle {
            classifier,
            count: AtomicU64::new(0),
        }
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }
}

impl Oracle for InProcessOracle {
    fn query(&self, x: &FeatureVector) -> Result<usize> {
        let label = self.classifier.predict(x)?;
        self.count.fetch_add(1, Ordering::Relaxed);
        Ok(label)
    }

    fn query_count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}
