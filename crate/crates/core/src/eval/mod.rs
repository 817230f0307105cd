//! Reported metrics: test accuracy, substitute success rate, and
//! transferability with NULL-aware success semantics.
//!
//! A transferred example only counts as a success if the target's label is
//! neither the original class nor NULL (misclassification mode), or exactly
//! the intended target label (targeted mode). A NULL verdict is always a
//! failed attack.

use std::io::Write;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::DifferentiableClassifier;
use crate::threat::{Oracle, TransferExample, TransferSet};

/// Success semantics for transfer evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Misclassification,
    Targeted,
}

/// One computed metric with an optional per-epsilon breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub metric_name: String,
    pub numerator: usize,
    pub denominator: usize,
    pub value: f64,
    /// `(epsilon, numerator, denominator, value)` rows, ascending epsilon.
    pub breakdown: Vec<(f64, usize, usize, f64)>,
    pub mode: Option<EvalMode>,
}

impl EvaluationReport {
    fn new(
        metric_name: impl Into<String>,
        numerator: usize,
        denominator: usize,
        mode: Option<EvalMode>,
    ) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::argument("metric denominator is zero"));
        }
        if numerator > denominator {
            return Err(Error::argument("metric numerator exceeds denominator"));
        }
        Ok(EvaluationReport {
            metric_name: metric_name.into(),
            numerator,
            denominator,
            value: numerator as f64 / denominator as f64,
            breakdown: Vec::new(),
            mode,
        })
    }

    fn with_breakdown(mut self, mut rows: Vec<(f64, usize, usize)>) -> Self {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.breakdown = rows
            .into_iter()
            .map(|(eps, num, den)| (eps, num, den, num as f64 / den.max(1) as f64))
            .collect();
        self
    }

    /// Breakdown value at an exact epsilon, if present.
    pub fn value_at(&self, epsilon: f64) -> Option<f64> {
        self.breakdown
            .iter()
            .find(|(e, ..)| *e == epsilon)
            .map(|&(.., v)| v)
    }
}

/// Fraction of samples labeled correctly. For a NULL-capable classifier a
/// NULL prediction on clean data counts as an error.
pub fn test_accuracy<M>(model: &M, test_set: &Dataset) -> Result<EvaluationReport>
where
    M: DifferentiableClassifier + Sync,
{
    if test_set.is_empty() {
        return Err(Error::argument("accuracy over an empty set"));
    }
    let correct: usize = test_set
        .samples
        .par_iter()
        .map(|s| Ok(usize::from(model.predict(&s.x)? == s.y)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    EvaluationReport::new("test_accuracy", correct, test_set.len(), None)
}

/// Fraction of attack attempts that produced an example feasible on the
/// substitute, per epsilon and overall.
pub fn substitute_success_rate(sets: &[(f64, TransferSet)]) -> Result<EvaluationReport> {
    let attempts: usize = sets.iter().map(|(_, s)| s.attempts).sum();
    if attempts == 0 {
        return Err(Error::argument("attack success rate over zero attempts"));
    }
    let feasible: usize = sets.iter().map(|(_, s)| s.examples.len()).sum();
    let rows: Vec<(f64, usize, usize)> = sets
        .iter()
        .map(|(eps, s)| (*eps, s.examples.len(), s.attempts))
        .collect();
    Ok(EvaluationReport::new("substitute_success_rate", feasible, attempts, None)?
        .with_breakdown(rows))
}

/// Transferability of substitute-feasible examples to a target oracle.
pub fn transferability_rate(
    target: &dyn Oracle,
    transfer_set: &[TransferExample],
    mode: EvalMode,
    valid_classes: usize,
) -> Result<EvaluationReport> {
    if transfer_set.is_empty() {
        return Err(Error::argument("transferability over an empty transfer set"));
    }
    let mut successes = 0usize;
    let mut per_eps: Vec<(f64, usize, usize)> = Vec::new();
    for ex in transfer_set {
        if mode == EvalMode::Targeted && ex.intended_target.is_none() {
            return Err(Error::argument(
                "targeted transferability needs intended target labels",
            ));
        }
        let label = target.query(&ex.record.result.x_star)?;
        let success = match mode {
            // NULL (any label beyond the valid classes) is a failed attack.
            EvalMode::Misclassification => {
                label != ex.record.result.original_label && label < valid_classes
            }
            EvalMode::Targeted => Some(label) == ex.intended_target,
        };
        successes += usize::from(success);
        match per_eps.iter_mut().find(|(e, ..)| *e == ex.record.epsilon) {
            Some(row) => {
                row.1 += usize::from(success);
                row.2 += 1;
            }
            None => per_eps.push((ex.record.epsilon, usize::from(success), 1)),
        }
    }
    Ok(
        EvaluationReport::new("transferability_rate", successes, transfer_set.len(), Some(mode))?
            .with_breakdown(per_eps),
    )
}

/// CSV form: `metric,epsilon,numerator,denominator,value`; the aggregate row
/// has an empty epsilon column, breakdown rows follow.
pub fn write_reports_csv<W: Write>(mut w: W, reports: &[EvaluationReport]) -> Result<()> {
    writeln!(w, "metric,epsilon,numerator,denominator,value")?;
    for r in reports {
        writeln!(
            w,
            "{},,{},{},{}",
            r.metric_name, r.numerator, r.denominator, r.value
        )?;
        for (eps, num, den, value) in &r.breakdown {
            writeln!(w, "{},{},{},{},{}", r.metric_name, eps, num, den, value)?;
        }
    }
    Ok(())
}

/// Plain-text accuracy table (classifier name, accuracy percentage).
pub fn accuracy_table(rows: &[(String, f64)]) -> String {
    let name_width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("Classifier".len()))
        .max()
        .unwrap_or(10);
    let mut out = String::new();
    out.push_str(&format!("{:<name_width$}  Accuracy\n", "Classifier"));
    out.push_str(&format!("{}  --------\n", "-".repeat(name_width)));
    for (name, value) in rows {
        out.push_str(&format!("{name:<name_width$}  {:>7.2}%\n", value * 100.0));
    }
    out
}
