//! Finite-difference gradient oracles.
//!
//! These evaluate only the forward/loss path, so they are an independent
//! check on the backward pass. Central differences are accurate to O(h^2)
//! away from ReLU and max-pool kinks; [`kink_margin`] reports how far a
//! point is from the nearest kink so callers can reject ill-conditioned
//! check points instead of loosening tolerances.

use crate::error::Result;
use crate::nn::classifier::{Classifier, DropoutMode};
use crate::nn::spec::{Layer, POOL_WINDOW};
use crate::nn::types::{FeatureVector, LossTarget};

/// Central-difference gradient of the loss with respect to the input.
/// Probe points may step slightly outside [0, 1]; the network is evaluated
/// on the raw values so boundary coordinates keep exact derivatives.
pub fn finite_diff_input_gradient(
    classifier: &Classifier,
    x: &FeatureVector,
    target: &LossTarget,
    step: f64,
) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(x.len());
    let mut values = x.to_vec();
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + step;
        let hi = classifier.loss_raw(&values, target)?;
        values[i] = orig - step;
        let lo = classifier.loss_raw(&values, target)?;
        values[i] = orig;
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(grad)
}

/// Central-difference gradient of the mean batch loss with respect to the
/// parameters listed in `coords`.
pub fn finite_diff_param_gradient(
    classifier: &Classifier,
    batch: &[(FeatureVector, LossTarget)],
    coords: &[usize],
    step: f64,
) -> Result<Vec<f64>> {
    let spec = classifier.spec().clone();
    let mut params = classifier.params().to_vec();
    let mut grad = Vec::with_capacity(coords.len());
    for &coord in coords {
        let orig = params[coord];

        params[coord] = orig + step;
        let plus = Classifier::from_parts(spec.clone(), params.clone(), classifier.seed())?;
        let hi = mean_loss(&plus, batch)?;

        params[coord] = orig - step;
        let minus = Classifier::from_parts(spec.clone(), params.clone(), classifier.seed())?;
        let lo = mean_loss(&minus, batch)?;

        params[coord] = orig;
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(grad)
}

/// Distance from the nearest gradient kink along the forward pass: the
/// smallest |pre-activation| over ReLU units and the smallest margin between
/// the window maximum and runner-up over max-pool windows. Returns infinity
/// for purely smooth networks.
pub fn kink_margin(classifier: &Classifier, x: &FeatureVector) -> Result<f64> {
    let trace = classifier.forward_trace(x, DropoutMode::Disabled)?;
    let plan = classifier.spec().plan()?;
    let mut margin = f64::INFINITY;
    for (idx, lp) in plan.layers.iter().enumerate() {
        match lp.layer {
            Layer::Relu => {
                for &z in &trace.inputs[idx] {
                    margin = margin.min(z.abs());
                }
            }
            Layer::MaxPool => {
                let input = &trace.inputs[idx];
                let (iw, ic) = (lp.in_shape.width, lp.in_shape.channels);
                for i in 0..lp.out_shape.height {
                    for j in 0..lp.out_shape.width {
                        for c in 0..ic {
                            let mut best = f64::NEG_INFINITY;
                            let mut second = f64::NEG_INFINITY;
                            for pi in 0..POOL_WINDOW {
                                for pj in 0..POOL_WINDOW {
                                    let v = input
                                        [((i * POOL_WINDOW + pi) * iw + j * POOL_WINDOW + pj) * ic + c];
                                    if v > best {
                                        second = best;
                                        best = v;
                                    } else if v > second {
                                        second = v;
                                    }
                                }
                            }
                            margin = margin.min(best - second);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(margin)
}

/// Worst-case relative error between two gradients:
/// `|a - b| / max(|a|, |b|, floor)` maximized over coordinates.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn mean_loss(classifier: &Classifier, batch: &[(FeatureVector, LossTarget)]) -> Result<f64> {
    let mut sum = 0.0;
    for (x, target) in batch {
        sum += classifier.loss(x, target)?;
    }
    Ok(sum / batch.len() as f64)
}
