//! Forward evaluation and exact reverse-mode gradients.
//!
//! The engine is deliberately small: a flat `f64` parameter vector, a
//! layer-by-layer forward pass that records every intermediate activation,
//! and a backward pass over that trace. Cross-entropy and the final softmax
//! are fused, so the backward pass starts from `probs - target` at the
//! logits and never differentiates through the softmax in isolation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::spec::{Layer, LayerPlan, NetworkSpec, Plan, CONV_KERNEL, POOL_WINDOW};
use crate::nn::types::{FeatureVector, LossTarget, ProbabilityVector};
use crate::rng::stream;

/// Probabilities are clamped to this floor inside `ln` so the loss stays finite.
pub const PROB_FLOOR: f64 = 1e-12;

/// Batch chunk size for parallel gradient accumulation. Fixed so the
/// floating-point summation order does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Anything that exposes probabilities and input-loss gradients. Attack
/// routines are written against this trait so they run unchanged on real
/// networks and on closed-form stubs in tests.
pub trait DifferentiableClassifier {
    fn input_dim(&self) -> usize;
    /// Total output classes, including the NULL slot when present.
    fn class_count(&self) -> usize;
    /// Index of the NULL slot, when the model has one.
    fn null_index(&self) -> Option<usize>;
    /// Evaluation-mode class probabilities.
    fn probabilities(&self, x: &FeatureVector) -> Result<ProbabilityVector>;
    /// Gradient of the cross-entropy loss with respect to the input.
    fn loss_gradient(&self, x: &FeatureVector, target: &LossTarget) -> Result<Vec<f64>>;

    /// Most probable class; ties break toward the lowest index.
    fn predict(&self, x: &FeatureVector) -> Result<usize> {
        Ok(self.probabilities(x)?.argmax())
    }
}

/// A network spec plus its parameter state.
#[derive(Debug, Clone)]
pub struct Classifier {
    spec: NetworkSpec,
    plan: Plan,
    params: Vec<f64>,
    seed: u64,
}

pub(crate) enum DropoutMode<'a> {
    /// Evaluation mode: dropout layers are the identity.
    Disabled,
    /// Training mode: sample a fresh mask per dropout layer.
    Sample(&'a mut ChaCha8Rng),
    /// Replay previously sampled masks (used by gradient checks).
    #[allow(dead_code)] // constructed only from tests
    Fixed(&'a [Option<Vec<f64>>]),
}

pub(crate) struct Trace {
    /// `inputs[i]` is the activation entering layer `i`.
    pub inputs: Vec<Vec<f64>>,
    /// Dropout masks actually applied, indexed by layer.
    pub masks: Vec<Option<Vec<f64>>>,
    pub probs: Vec<f64>,
}

impl Classifier {
    /// Fresh classifier with seeded uniform weight initialization
    /// (scale `sqrt(6 / (fan_in + fan_out))`) and zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let plan = spec.plan()?;
        let mut params = vec![0.0; plan.param_count];
        let mut rng = stream(seed, "param-init", 0);
        for lp in &plan.layers {
            let (fan_in, fan_out, weight_len) = match lp.layer {
                Layer::Dense { units } => {
                    (lp.in_shape.len(), units, lp.in_shape.len() * units)
                }
                Layer::Conv2d { filters } => {
                    let patch = CONV_KERNEL * CONV_KERNEL * lp.in_shape.channels;
                    (patch, CONV_KERNEL * CONV_KERNEL * filters, patch * filters)
                }
                _ => continue,
            };
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params[lp.param_offset..lp.param_offset + weight_len] {
                *w = rng.gen_range(-scale..=scale);
            }
            // biases (the tail of the layer's slice) stay zero
        }
        Ok(Classifier {
            spec,
            plan,
            params,
            seed,
        })
    }

    /// Rebuilds a classifier from a spec and an existing parameter vector.
    pub fn from_parts(spec: NetworkSpec, params: Vec<f64>, seed: u64) -> Result<Self> {
        let plan = spec.plan()?;
        if params.len() != plan.param_count {
            return Err(Error::Dimension {
                expected: plan.param_count,
                got: params.len(),
            });
        }
        Ok(Classifier {
            spec,
            plan,
            params,
            seed,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.plan.param_count
    }

    /// Valid (non-NULL) classes.
    pub fn valid_class_count(&self) -> usize {
        self.spec.valid_class_count()
    }

    /// Evaluation-mode forward pass; dropout disabled, fully deterministic.
    pub fn forward(&self, x: &FeatureVector) -> Result<ProbabilityVector> {
        let trace = self.forward_trace(x, DropoutMode::Disabled)?;
        ProbabilityVector::new(trace.probs, self.spec.null_index())
    }

    /// Training-mode forward pass; dropout masks are drawn from `rng`.
    pub fn forward_train(&self, x: &FeatureVector, rng: &mut ChaCha8Rng) -> Result<ProbabilityVector> {
        let trace = self.forward_trace(x, DropoutMode::Sample(rng))?;
        ProbabilityVector::new(trace.probs, self.spec.null_index())
    }

    /// Cross-entropy of the evaluation-mode prediction against `target`.
    pub fn loss(&self, x: &FeatureVector, target: &LossTarget) -> Result<f64> {
        self.loss_raw(x.values(), target)
    }

    pub(crate) fn loss_raw(&self, x: &[f64], target: &LossTarget) -> Result<f64> {
        let trace = self.forward_trace_raw(x, DropoutMode::Disabled)?;
        cross_entropy(&trace.probs, &target.dense(self.spec.class_count)?)
    }

    /// Exact gradient of the loss with respect to the input features.
    /// Dropout is disabled, so the gradient is deterministic.
    pub fn input_gradient(&self, x: &FeatureVector, target: &LossTarget) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x, DropoutMode::Disabled)?;
        let dense = target.dense(self.spec.class_count)?;
        let (dx, _) = self.backward(&trace, &dense, false);
        Ok(dx)
    }

    /// Mean parameter gradient over a non-empty batch (evaluation mode).
    pub fn param_gradient(&self, batch: &[(FeatureVector, LossTarget)]) -> Result<Vec<f64>> {
        Ok(self.param_gradient_with_loss(batch)?.0)
    }

    /// Mean parameter gradient and mean loss over a non-empty batch.
    pub fn param_gradient_with_loss(
        &self,
        batch: &[(FeatureVector, LossTarget)],
    ) -> Result<(Vec<f64>, f64)> {
        if batch.is_empty() {
            return Err(Error::argument("parameter gradient over an empty batch"));
        }
        // Fixed-size chunks are accumulated independently and reduced in
        // chunk order, so results do not depend on the worker count.
        let partials: Vec<Result<(Vec<f64>, f64)>> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; self.plan.param_count];
                let mut loss_sum = 0.0;
                for (x, target) in chunk {
                    let trace = self.forward_trace(x, DropoutMode::Disabled)?;
                    let dense = target.dense(self.spec.class_count)?;
                    loss_sum += cross_entropy(&trace.probs, &dense)?;
                    let (_, dparams) = self.backward(&trace, &dense, true);
                    for (g, d) in grad.iter_mut().zip(&dparams) {
                        *g += d;
                    }
                }
                Ok((grad, loss_sum))
            })
            .collect();

        let mut grad = vec![0.0; self.plan.param_count];
        let mut loss_sum = 0.0;
        for partial in partials {
            let (g, l) = partial?;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
            loss_sum += l;
        }
        let n = batch.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok((grad, loss_sum / n))
    }

    /// Parameter gradient in training mode: dropout masks are drawn from
    /// `rng`, one set per sample, in batch order.
    pub(crate) fn param_gradient_train(
        &self,
        batch: &[(FeatureVector, LossTarget)],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, f64)> {
        if batch.is_empty() {
            return Err(Error::argument("parameter gradient over an empty batch"));
        }
        if !self.has_dropout() {
            return self.param_gradient_with_loss(batch);
        }
        let mut grad = vec![0.0; self.plan.param_count];
        let mut loss_sum = 0.0;
        for (x, target) in batch {
            let trace = self.forward_trace(x, DropoutMode::Sample(rng))?;
            let dense = target.dense(self.spec.class_count)?;
            loss_sum += cross_entropy(&trace.probs, &dense)?;
            let (_, dparams) = self.backward(&trace, &dense, true);
            for (g, d) in grad.iter_mut().zip(&dparams) {
                *g += d;
            }
        }
        let n = batch.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok((grad, loss_sum / n))
    }

    /// One gradient-descent update: `params -= learning_rate * gradient`.
    pub fn sgd_step(&mut self, gradient: &[f64], learning_rate: f64) -> Result<()> {
        if gradient.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: gradient.len(),
            });
        }
        for (p, g) in self.params.iter_mut().zip(gradient) {
            *p -= learning_rate * g;
        }
        Ok(())
    }

    fn has_dropout(&self) -> bool {
        self.spec
            .layers
            .iter()
            .any(|l| matches!(l, Layer::Dropout { .. }))
    }

    pub(crate) fn forward_trace(&self, x: &FeatureVector, mode: DropoutMode) -> Result<Trace> {
        self.forward_trace_raw(x.values(), mode)
    }

    /// Forward pass over a raw activation slice. The network is defined on
    /// all of R^n; only the public API enforces the [0, 1] feature bound.
    pub(crate) fn forward_trace_raw(&self, x: &[f64], mut mode: DropoutMode) -> Result<Trace> {
        if x.len() != self.spec.input_len() {
            return Err(Error::Dimension {
                expected: self.spec.input_len(),
                got: x.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.plan.layers.len());
        let mut masks: Vec<Option<Vec<f64>>> = vec![None; self.plan.layers.len()];
        let mut current = x.to_vec();
        for (idx, lp) in self.plan.layers.iter().enumerate() {
            inputs.push(current);
            let input = inputs.last().expect("just pushed");
            current = match &lp.layer {
                Layer::Dense { units } => self.dense_forward(lp, input, *units),
                Layer::Conv2d { filters } => self.conv_forward(lp, input, *filters),
                Layer::MaxPool => maxpool_forward(lp, input),
                Layer::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                Layer::Dropout { rate } => match &mut mode {
                    DropoutMode::Disabled => input.clone(),
                    DropoutMode::Sample(rng) => {
                        let keep = 1.0 - rate;
                        let mask: Vec<f64> = input
                            .iter()
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        let out = input.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        masks[idx] = Some(mask);
                        out
                    }
                    DropoutMode::Fixed(fixed) => match &fixed[idx] {
                        Some(mask) => {
                            masks[idx] = Some(mask.clone());
                            input.iter().zip(mask.iter()).map(|(v, m)| v * m).collect()
                        }
                        None => input.clone(),
                    },
                },
                Layer::Softmax => softmax(input),
            };
        }
        for &p in &current {
            if !p.is_finite() {
                return Err(Error::Numeric("non-finite activation in forward pass".into()));
            }
        }
        Ok(Trace {
            inputs,
            masks,
            probs: current,
        })
    }

    fn dense_forward(&self, lp: &LayerPlan, input: &[f64], units: usize) -> Vec<f64> {
        let n = lp.in_shape.len();
        let w = &self.params[lp.param_offset..lp.param_offset + n * units];
        let b = &self.params[lp.param_offset + n * units..lp.param_offset + lp.param_len];
        let mut out = Vec::with_capacity(units);
        for u in 0..units {
            let row = &w[u * n..(u + 1) * n];
            let dot: f64 = row.iter().zip(input).map(|(wi, xi)| wi * xi).sum();
            out.push(dot + b[u]);
        }
        out
    }

    fn conv_forward(&self, lp: &LayerPlan, input: &[f64], filters: usize) -> Vec<f64> {
        let (iw, ic) = (lp.in_shape.width, lp.in_shape.channels);
        let (oh, ow) = (lp.out_shape.height, lp.out_shape.width);
        let wlen = filters * CONV_KERNEL * CONV_KERNEL * ic;
        let w = &self.params[lp.param_offset..lp.param_offset + wlen];
        let b = &self.params[lp.param_offset + wlen..lp.param_offset + lp.param_len];
        let mut out = vec![0.0; oh * ow * filters];
        for i in 0..oh {
            for j in 0..ow {
                for f in 0..filters {
                    let mut acc = b[f];
                    for ki in 0..CONV_KERNEL {
                        for kj in 0..CONV_KERNEL {
                            let row = ((i + ki) * iw + (j + kj)) * ic;
                            let wrow = ((f * CONV_KERNEL + ki) * CONV_KERNEL + kj) * ic;
                            for c in 0..ic {
                                acc += input[row + c] * w[wrow + c];
                            }
                        }
                    }
                    out[(i * ow + j) * filters + f] = acc;
                }
            }
        }
        out
    }

    /// Backpropagates `probs - target` through the trace. Returns the input
    /// gradient and, when `want_params` is set, the parameter gradient.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        target_dense: &[f64],
        want_params: bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut dparams = if want_params {
            vec![0.0; self.plan.param_count]
        } else {
            Vec::new()
        };
        // Gradient at the softmax input (fused softmax + cross-entropy).
        let mut grad: Vec<f64> = trace
            .probs
            .iter()
            .zip(target_dense)
            .map(|(p, t)| p - t)
            .collect();

        for idx in (0..self.plan.layers.len() - 1).rev() {
            let lp = &self.plan.layers[idx];
            let input = &trace.inputs[idx];
            grad = match &lp.layer {
                Layer::Dense { units } => {
                    self.dense_backward(lp, input, &grad, *units, want_params, &mut dparams)
                }
                Layer::Conv2d { filters } => {
                    self.conv_backward(lp, input, &grad, *filters, want_params, &mut dparams)
                }
                Layer::MaxPool => maxpool_backward(lp, input, &grad),
                Layer::Relu => input
                    .iter()
                    .zip(&grad)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect(),
                Layer::Dropout { .. } => match &trace.masks[idx] {
                    Some(mask) => grad.iter().zip(mask).map(|(g, m)| g * m).collect(),
                    None => grad,
                },
                Layer::Softmax => unreachable!("softmax is always the final layer"),
            };
        }
        (grad, dparams)
    }

    fn dense_backward(
        &self,
        lp: &LayerPlan,
        input: &[f64],
        dy: &[f64],
        units: usize,
        want_params: bool,
        dparams: &mut [f64],
    ) -> Vec<f64> {
        let n = lp.in_shape.len();
        let w = &self.params[lp.param_offset..lp.param_offset + n * units];
        let mut dx = vec![0.0; n];
        for u in 0..units {
            let g = dy[u];
            if g == 0.0 {
                continue;
            }
            let row = &w[u * n..(u + 1) * n];
            for (dxj, wj) in dx.iter_mut().zip(row) {
                *dxj += g * wj;
            }
        }
        if want_params {
            let (dw, db) = dparams[lp.param_offset..lp.param_offset + lp.param_len]
                .split_at_mut(n * units);
            for u in 0..units {
                let g = dy[u];
                db[u] += g;
                if g == 0.0 {
                    continue;
                }
                let drow = &mut dw[u * n..(u + 1) * n];
                for (d, xj) in drow.iter_mut().zip(input) {
                    *d += g * xj;
                }
            }
        }
        dx
    }

    fn conv_backward(
        &self,
        lp: &LayerPlan,
        input: &[f64],
        dy: &[f64],
        filters: usize,
        want_params: bool,
        dparams: &mut [f64],
    ) -> Vec<f64> {
        let (iw, ic) = (lp.in_shape.width, lp.in_shape.channels);
        let (oh, ow) = (lp.out_shape.height, lp.out_shape.width);
        let wlen = filters * CONV_KERNEL * CONV_KERNEL * ic;
        let w = &self.params[lp.param_offset..lp.param_offset + wlen];
        let mut dx = vec![0.0; lp.in_shape.len()];
        for i in 0..oh {
            for j in 0..ow {
                for f in 0..filters {
                    let g = dy[(i * ow + j) * filters + f];
                    if g == 0.0 {
                        continue;
                    }
                    for ki in 0..CONV_KERNEL {
                        for kj in 0..CONV_KERNEL {
                            let row = ((i + ki) * iw + (j + kj)) * ic;
                            let wrow = ((f * CONV_KERNEL + ki) * CONV_KERNEL + kj) * ic;
                            for c in 0..ic {
                                dx[row + c] += g * w[wrow + c];
                            }
                        }
                    }
                }
            }
        }
        if want_params {
            let (dw, db) = dparams[lp.param_offset..lp.param_offset + lp.param_len]
                .split_at_mut(wlen);
            for i in 0..oh {
                for j in 0..ow {
                    for f in 0..filters {
                        let g = dy[(i * ow + j) * filters + f];
                        db[f] += g;
                        if g == 0.0 {
                            continue;
                        }
                        for ki in 0..CONV_KERNEL {
                            for kj in 0..CONV_KERNEL {
                                let row = ((i + ki) * iw + (j + kj)) * ic;
                                let wrow = ((f * CONV_KERNEL + ki) * CONV_KERNEL + kj) * ic;
                                for c in 0..ic {
                                    dw[wrow + c] += g * input[row + c];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

impl DifferentiableClassifier for Classifier {
    fn input_dim(&self) -> usize {
        self.spec.input_len()
    }

    fn class_count(&self) -> usize {
        self.spec.class_count
    }

    fn null_index(&self) -> Option<usize> {
        self.spec.null_index()
    }

    fn probabilities(&self, x: &FeatureVector) -> Result<ProbabilityVector> {
        self.forward(x)
    }

    fn loss_gradient(&self, x: &FeatureVector, target: &LossTarget) -> Result<Vec<f64>> {
        self.input_gradient(x, target)
    }
}

fn maxpool_forward(lp: &LayerPlan, input: &[f64]) -> Vec<f64> {
    let (iw, ic) = (lp.in_shape.width, lp.in_shape.channels);
    let (oh, ow) = (lp.out_shape.height, lp.out_shape.width);
    let mut out = vec![0.0; oh * ow * ic];
    for i in 0..oh {
        for j in 0..ow {
            for c in 0..ic {
                let mut best = f64::NEG_INFINITY;
                for pi in 0..POOL_WINDOW {
                    for pj in 0..POOL_WINDOW {
                        let v = input[((i * POOL_WINDOW + pi) * iw + j * POOL_WINDOW + pj) * ic + c];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(i * ow + j) * ic + c] = best;
            }
        }
    }
    out
}

fn maxpool_backward(lp: &LayerPlan, input: &[f64], dy: &[f64]) -> Vec<f64> {
    let (iw, ic) = (lp.in_shape.width, lp.in_shape.channels);
    let (oh, ow) = (lp.out_shape.height, lp.out_shape.width);
    let mut dx = vec![0.0; lp.in_shape.len()];
    for i in 0..oh {
        for j in 0..ow {
            for c in 0..ic {
                // Gradient flows to the first maximum in row-major window order.
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for pi in 0..POOL_WINDOW {
                    for pj in 0..POOL_WINDOW {
                        let idx = ((i * POOL_WINDOW + pi) * iw + j * POOL_WINDOW + pj) * ic + c;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                dx[best_idx] += dy[(i * ow + j) * ic + c];
            }
        }
    }
    dx
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy `-sum(t * ln(max(p, PROB_FLOOR)))`.
pub(crate) fn cross_entropy(probs: &[f64], target_dense: &[f64]) -> Result<f64> {
    if probs.len() != target_dense.len() {
        return Err(Error::Dimension {
            expected: probs.len(),
            got: target_dense.len(),
        });
    }
    let mut loss = 0.0;
    for (&p, &t) in probs.iter().zip(target_dense) {
        loss -= t * p.max(PROB_FLOOR).ln();
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok(loss)
}
