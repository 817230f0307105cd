//! Training-target construction: label smoothing and NULL-aware targets.
//!
//! Both constructors assign the off-ground-truth slots by formula and then
//! push the floating-point summation residue into the largest slot, so the
//! emitted vector sums to exactly 1.0 and the two constructions agree
//! coordinate-wise at `p_null = 0`.

use crate::error::{Error, Result};
use crate::nn::ProbabilityVector;

/// Label-smoothed clean target: mass `q` on the ground truth, the rest
/// spread uniformly over the other valid classes; a NULL slot, when present,
/// gets zero.
pub fn smoothed_clean_target(
    y: usize,
    valid_classes: usize,
    q: f64,
    has_null: bool,
) -> Result<ProbabilityVector> {
    build_target(y, valid_classes, q, 0.0, has_null)
}

/// A smoothed target with probability mass `p_null` moved onto the NULL
/// slot: the ground truth keeps `q * (1 - p_null)` and every other valid
/// class `(1 - q) * (1 - p_null) / (K - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialTarget {
    pub probs: ProbabilityVector,
    pub p_null: f64,
}

pub fn adversarial_target(
    y: usize,
    valid_classes: usize,
    q: f64,
    p_null: f64,
) -> Result<AdversarialTarget> {
    if !(0.0..=1.0).contains(&p_null) {
        return Err(Error::argument(format!(
            "p_null {p_null} must lie in [0, 1]"
        )));
    }
    Ok(AdversarialTarget {
        probs: build_target(y, valid_classes, q, p_null, true)?,
        p_null,
    })
}

fn build_target(
    y: usize,
    valid_classes: usize,
    q: f64,
    p_null: f64,
    has_null: bool,
) -> Result<ProbabilityVector> {
    if valid_classes < 2 {
        return Err(Error::argument("label smoothing needs at least two classes"));
    }
    if y >= valid_classes {
        return Err(Error::argument(format!(
            "label {y} out of range for {valid_classes} classes"
        )));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::argument(format!("q {q} must lie in (0, 1]")));
    }
    let len = if has_null {
        valid_classes + 1
    } else {
        valid_classes
    };
    let keep = 1.0 - p_null;
    let other = (1.0 - q) * keep / (valid_classes - 1) as f64;
    let mut probs = vec![other; len];
    probs[y] = q * keep;
    if has_null {
        probs[valid_classes] = p_null;
    }
    settle_to_simplex(&mut probs);
    ProbabilityVector::new(probs, has_null.then_some(valid_classes))
}

/// Moves the floating-point summation residue (a few ulps) into the last
/// slot so the plain left-to-right sum lands on exactly 1.0. Setting the
/// final addend to `1 - prefix` is exact for `prefix >= 0.5` by Sterbenz
/// cancellation and within half an ulp of 1 otherwise, which still rounds
/// to exactly 1; adjusting any earlier slot cannot give that guarantee
/// because later partial sums re-quantize the correction.
fn settle_to_simplex(probs: &mut [f64]) {
    let plain_sum = |v: &[f64]| -> f64 { v.iter().sum() };
    if plain_sum(probs) == 1.0 {
        return;
    }
    let last = probs.len() - 1;
    // If the prefix overshoots 1, the last slot would go negative; bleed the
    // overshoot out of the largest slot first.
    for _ in 0..8 {
        let prefix = plain_sum(&probs[..last]);
        if prefix <= 1.0 {
            break;
        }
        let mut slot = 0;
        for (i, &v) in probs[..last].iter().enumerate() {
            if v > probs[slot] {
                slot = i;
            }
        }
        probs[slot] = (probs[slot] - (prefix - 1.0)).max(0.0);
    }
    let prefix = plain_sum(&probs[..last]);
    let adjusted = (1.0 - prefix).max(0.0);
    debug_assert!((adjusted - probs[last]).abs() < 1e-9);
    probs[last] = adjusted;
    debug_assert_eq!(plain_sum(probs), 1.0);
}
