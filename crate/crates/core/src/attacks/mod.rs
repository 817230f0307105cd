//! Adversarial example generation.
//!
//! All five procedures share the same linearization: the loss is expanded to
//! first order around the current input, and coordinates are pushed to a
//! binary extreme (L0 family) or shifted by `epsilon * sign(grad)` (FGS).
//! Score ties always break toward the lowest feature index, and a NULL
//! prediction never counts as a successful misclassification.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nn::{DifferentiableClassifier, FeatureVector, LossTarget, ProbabilityVector};

/// Perturbation norm for a budgeted attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L0,
    Linf,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::L0 => write!(f, "L0"),
            Norm::Linf => write!(f, "Linf"),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L0" => Ok(Norm::L0),
            "Linf" => Ok(Norm::Linf),
            other => Err(Error::format(format!("unknown norm '{other}'"))),
        }
    }
}

/// An `epsilon` fraction of the norm's maximum possible perturbation
/// (`|X|` changed features for L0, a full-range shift for L-infinity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackBudget {
    pub norm: Norm,
    pub epsilon: f64,
}

impl AttackBudget {
    pub fn new(norm: Norm, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::argument(format!(
                "epsilon {epsilon} must lie in [0, 1]"
            )));
        }
        Ok(AttackBudget { norm, epsilon })
    }

    pub fn l0(epsilon: f64) -> Result<Self> {
        Self::new(Norm::L0, epsilon)
    }

    pub fn linf(epsilon: f64) -> Result<Self> {
        Self::new(Norm::Linf, epsilon)
    }

    /// Maximum possible perturbation for an input of `dim` features.
    pub fn delta_max(&self, dim: usize) -> f64 {
        match self.norm {
            Norm::L0 => dim as f64,
            Norm::Linf => 1.0,
        }
    }

    /// Number of features an L0 budget may change: `floor(epsilon * |X|)`.
    pub fn l0_feature_budget(&self, dim: usize) -> usize {
        (self.epsilon * dim as f64).floor() as usize
    }
}

/// Outcome of one attack attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialResult {
    pub x_star: FeatureVector,
    pub original_label: usize,
    pub achieved_label: usize,
    /// Count of coordinates that actually changed (MG reports iterations used).
    pub perturbation_l0: usize,
    pub perturbation_linf: f64,
    pub feasible: bool,
}

impl AdversarialResult {
    fn from_perturbation(
        x: &FeatureVector,
        x_star: FeatureVector,
        original_label: usize,
        achieved_label: usize,
        feasible: bool,
    ) -> Self {
        let (l0, linf) = perturbation_size(x, &x_star);
        AdversarialResult {
            x_star,
            original_label,
            achieved_label,
            perturbation_l0: l0,
            perturbation_linf: linf,
            feasible,
        }
    }
}

fn perturbation_size(x: &FeatureVector, x_star: &FeatureVector) -> (usize, f64) {
    let mut l0 = 0usize;
    let mut linf = 0.0f64;
    for (a, b) in x.values().iter().zip(x_star.values()) {
        let d = (a - b).abs();
        if d > 0.0 {
            l0 += 1;
        }
        linf = linf.max(d);
    }
    (l0, linf)
}

/// A label counts as a successful misclassification only if it differs from
/// the original and is not the NULL slot.
pub fn is_successful_misclassification(
    model: &impl DifferentiableClassifier,
    achieved: usize,
    original: usize,
) -> bool {
    achieved != original && model.null_index() != Some(achieved)
}

/// Binary extreme per coordinate when *maximizing* the linearized loss:
/// 1 where the gradient is positive, 0 otherwise.
fn ascent_extremes(grad: &[f64]) -> Vec<f64> {
    grad.iter().map(|&g| if g > 0.0 { 1.0 } else { 0.0 }).collect()
}

/// Binary extreme per coordinate when *minimizing* the linearized loss:
/// 1 where the gradient is negative, 0 otherwise.
fn descent_extremes(grad: &[f64]) -> Vec<f64> {
    grad.iter().map(|&g| if g < 0.0 { 1.0 } else { 0.0 }).collect()
}

fn scores(grad: &[f64], extremes: &[f64], x: &[f64]) -> Vec<f64> {
    grad.iter()
        .zip(extremes)
        .zip(x)
        .map(|((&g, &e), &v)| g * (e - v))
        .collect()
}

/// Indices of the `k` largest scores, ties broken toward the lowest index.
fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| a.cmp(&b)));
    order.truncate(k);
    order
}

/// Single-shot L0 attack: flips the budgeted number of features with the
/// largest linearized loss increase to their binary extremes.
pub fn grad0(
    model: &impl DifferentiableClassifier,
    x: &FeatureVector,
    y: usize,
    budget: &AttackBudget,
) -> Result<AdversarialResult> {
    if budget.norm != Norm::L0 {
        return Err(Error::argument("grad0 requires an L0 budget"));
    }
    let k = budget.l0_feature_budget(x.len());
    if k == 0 {
        let achieved = model.predict(x)?;
        return Ok(AdversarialResult::from_perturbation(
            x,
            x.clone(),
            y,
            achieved,
            false,
        ));
    }
    let grad = model.loss_gradient(x, &LossTarget::Label(y))?;
    let extremes = ascent_extremes(&grad);
    let s = scores(&grad, &extremes, x.values());
    let mut x_star = x.clone();
    for i in top_k_indices(&s, k) {
        x_star.set(i, extremes[i]);
    }
    let achieved = model.predict(&x_star)?;
    let feasible = is_successful_misclassification(model, achieved, y);
    Ok(AdversarialResult::from_perturbation(
        x, x_star, y, achieved, feasible,
    ))
}

/// Fast gradient sign under an L-infinity budget, clipped back to [0, 1].
/// `sign(0) = 0`, so zero-gradient coordinates stay untouched.
pub fn fgs(
    model: &impl DifferentiableClassifier,
    x: &FeatureVector,
    y: usize,
    budget: &AttackBudget,
) -> Result<AdversarialResult> {
    if budget.norm != Norm::Linf {
        return Err(Error::argument("fgs requires an L-infinity budget"));
    }
    let grad = model.loss_gradient(x, &LossTarget::Label(y))?;
    let values: Vec<f64> = x
        .values()
        .iter()
        .zip(&grad)
        .map(|(&v, &g)| {
            let sign = if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            };
            (v + budget.epsilon * sign).clamp(0.0, 1.0)
        })
        .collect();
    let x_star = FeatureVector::new(values).expect("clipped to [0, 1]");
    let achieved = model.predict(&x_star)?;
    let feasible = is_successful_misclassification(model, achieved, y);
    Ok(AdversarialResult::from_perturbation(
        x, x_star, y, achieved, feasible,
    ))
}

/// Iterative misclassification attack: one feature per step, gradient
/// recomputed at the current point, until the label leaves `{y, NULL}`.
pub fn mg(
    model: &impl DifferentiableClassifier,
    x: &FeatureVector,
    y: usize,
    max_features: usize,
) -> Result<AdversarialResult> {
    Ok(mg_with_trace(model, x, y, max_features)?.0)
}

/// [`mg`], also returning the flip sequence in order.
pub fn mg_with_trace(
    model: &impl DifferentiableClassifier,
    x: &FeatureVector,
    y: usize,
    max_features: usize,
) -> Result<(AdversarialResult, Vec<usize>)> {
    if max_features == 0 {
        return Err(Error::argument("mg needs a budget of at least one feature"));
    }
    let mut flips = Vec::new();
    let mut current = x.clone();
    let mut flipped = vec![false; x.len()];
    let mut achieved = model.predict(&current)?;
    let mut feasible = is_successful_misclassification(model, achieved, y);
    while !feasible && flips.len() < max_features {
        let grad = model.loss_gradient(&current, &LossTarget::Label(y))?;
        let extremes = ascent_extremes(&grad);
        let s = scores(&grad, &extremes, current.values());
        let best = match best_unflipped_max(&s, &flipped) {
            Some(i) => i,
            None => break, // every feature already flipped
        };
        current.set(best, extremes[best]);
        flipped[best] = true;
        flips.push(best);
        achieved = model.predict(&current)?;
        feasible = is_successful_misclassification(model, achieved, y);
    }
    let iterations = flips.len();
    let mut result = AdversarialResult::from_perturbation(x, current, y, achieved, feasible);
    // MG reports iterations used rather than coordinates changed.
    result.perturbation_l0 = iterations;
    Ok((result, flips))
}

fn best_unflipped_max(scores: &[f64], flipped: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if flipped[i] {
            continue;
        }
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Targeted greedy attack: per step one gradient evaluation, flipping the
/// feature with the most negative linearized-loss score toward `target_y`.
pub fn greedy_targeted(
    model: &impl DifferentiableClassifier,
    x: &FeatureVector,
    target_y: usize,
    max_features: usize,
) -> Result<AdversarialResult> {
    Ok(greedy_targeted_with_trace(model, x, target_y, max_features)?.0)
}

/// [`greedy_targeted`], also returning the flip sequence in order.
pub fn greedy_targeted_with_trace(
    model: &impl DifferentiableClassifier,
    x: &FeatureVector,
    target_y: usize,
    max_features: usize,
) -> Result<(AdversarialResult, Vec<usize>)> {
    if target_y >= model.class_count() {
        return Err(Error::argument(format!(
            "target label {target_y} out of range for {} classes",
            model.class_count()
        )));
    }
    if model.null_index() == Some(target_y) {
        return Err(Error::argument("the NULL label is never a valid target"));
    }
    let mut flips = Vec::new();
    let mut current = x.clone();
    let mut flipped = vec![false; x.len()];
    let original = model.predict(x)?;
    let target = LossTarget::Label(target_y);
    let mut achieved;
    let feasible;
    loop {
        achieved = model.predict(&current)?;
        if achieved == target_y {
            feasible = true;
            break;
        }
        if flips.len() == max_features {
            feasible = false;
            break;
        }
        let grad = model.loss_gradient(&current, &target)?;
        let extremes = descent_extremes(&grad);
        let s = scores(&grad, &extremes, current.values());
        // Only strictly descending flips are candidates.
        let best = match best_unflipped_min(&s, &flipped) {
            Some(i) if s[i] < 0.0 => i,
            _ => {
                feasible = false;
                break;
            }
        };
        current.set(best, extremes[best]);
        flipped[best] = true;
        flips.push(best);
    }
    let mut result =
        AdversarialResult::from_perturbation(x, current, original, achieved, feasible);
    result.perturbation_l0 = flips.len();
    Ok((result, flips))
}

fn best_unflipped_min(scores: &[f64], flipped: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if flipped[i] {
            continue;
        }
        match best {
            Some(b) if scores[b] <= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Smooth targeted generator used during NULL training: pushes `n_features`
/// coordinates toward the uniform-over-valid-classes target. Always returns
/// the perturbed vector; there is no success condition.
pub fn stg(
    model: &impl DifferentiableClassifier,
    x: &FeatureVector,
    n_features: usize,
) -> Result<FeatureVector> {
    let null_index = model
        .null_index()
        .ok_or_else(|| Error::config("stg requires a classifier with a NULL slot"))?;
    if n_features == 0 || n_features > x.len() {
        return Err(Error::argument(format!(
            "n_features {n_features} must lie in [1, {}]",
            x.len()
        )));
    }
    let target = LossTarget::Distribution(smooth_target(model.class_count(), null_index)?);
    let grad = model.loss_gradient(x, &target)?;
    let extremes = descent_extremes(&grad);
    let s = scores(&grad, &extremes, x.values());
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then_with(|| a.cmp(&b)));
    let mut x_star = x.clone();
    for &i in order.iter().take(n_features) {
        x_star.set(i, extremes[i]);
    }
    Ok(x_star)
}

/// The STG generation target: `1/K` on each valid class, zero on NULL.
pub fn smooth_target(class_count: usize, null_index: usize) -> Result<ProbabilityVector> {
    let k = class_count - 1;
    if k < 1 {
        return Err(Error::argument("smooth target needs at least one valid class"));
    }
    let mut probs = vec![1.0 / k as f64; class_count];
    probs[null_index] = 0.0;
    ProbabilityVector::new(probs, Some(null_index))
}

/// One attack outcome tagged with its source sample and budget, as persisted
/// in adversarial-batch CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialRecord {
    pub sample_id: usize,
    pub norm: Norm,
    pub epsilon: f64,
    pub result: AdversarialResult,
}

/// Writes adversarial records as CSV: a header row, then per row the sample
/// id, labels, budget, perturbation sizes, feasibility, and the full feature
/// vector at nine significant digits.
pub fn write_records_csv<W: Write>(mut w: W, records: &[AdversarialRecord]) -> Result<()> {
    let dim = records.first().map(|r| r.result.x_star.len()).unwrap_or(0);
    write!(
        w,
        "sample_id,original_label,achieved_label,norm,epsilon,perturbation_l0,perturbation_linf,feasible"
    )?;
    for i in 0..dim {
        write!(w, ",x{i}")?;
    }
    writeln!(w)?;
    for r in records {
        write!(
            w,
            "{},{},{},{},{},{},{:.8e},{}",
            r.sample_id,
            r.result.original_label,
            r.result.achieved_label,
            r.norm,
            r.epsilon,
            r.result.perturbation_l0,
            r.result.perturbation_linf,
            r.result.feasible
        )?;
        for v in r.result.x_star.values() {
            write!(w, ",{v:.8e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parses a CSV produced by [`write_records_csv`].
pub fn read_records_csv<R: BufRead>(r: R) -> Result<Vec<AdversarialRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("adversarial CSV is empty"))??;
    if !header.starts_with("sample_id,") {
        return Err(Error::format("adversarial CSV has an unexpected header"));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 8 {
            return Err(Error::format(format!(
                "adversarial CSV row has {} fields",
                fields.len()
            )));
        }
        let values: Vec<f64> = fields[8..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(format!("bad feature value: {e}")))?;
        let result = AdversarialResult {
            x_star: FeatureVector::new(values)
                .map_err(|_| Error::format("feature value outside [0, 1]"))?,
            original_label: parse_field(fields[1], "original_label")?,
            achieved_label: parse_field(fields[2], "achieved_label")?,
            perturbation_l0: parse_field(fields[5], "perturbation_l0")?,
            perturbation_linf: fields[6]
                .parse()
                .map_err(|_| Error::format("bad perturbation_linf"))?,
            feasible: match fields[7] {
                "true" => true,
                "false" => false,
                other => return Err(Error::format(format!("bad feasible flag '{other}'"))),
            },
        };
        records.push(AdversarialRecord {
            sample_id: parse_field(fields[0], "sample_id")?,
            norm: fields[3].parse()?,
            epsilon: fields[4].parse().map_err(|_| Error::format("bad epsilon"))?,
            result,
        });
    }
    Ok(records)
}

fn parse_field(field: &str, name: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::format(format!("bad {name} '{field}'")))
}

#[cfg(test)]
mod tests;
