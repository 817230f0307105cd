//! The empirical NULL-probability function `f`.
//!
//! `f` maps a perturbation fraction to the probability that this much
//! perturbation suffices to misclassify: the empirical CDF of per-sample
//! MG perturbation counts on validation data, evaluated at integer feature
//! counts as a right-continuous step function.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::attacks::mg;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::DifferentiableClassifier;

#[derive(Debug, Clone, PartialEq)]
pub struct NullProbabilityFn {
    /// Distinct perturbation counts, ascending.
    counts: Vec<usize>,
    /// Cumulative fraction of samples at or below each count.
    cumulative: Vec<f64>,
    n_max: usize,
    input_dim: usize,
}

impl NullProbabilityFn {
    /// Builds the empirical CDF from raw per-sample perturbation counts.
    pub fn from_counts(mut raw: Vec<usize>, input_dim: usize) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::argument(
                "NULL-probability function needs at least one sample",
            ));
        }
        if input_dim == 0 {
            return Err(Error::argument("input dimension must be positive"));
        }
        let total = raw.len() as f64;
        raw.sort_unstable();
        let mut counts = Vec::new();
        let mut cumulative = Vec::new();
        let mut seen = 0usize;
        let mut i = 0;
        while i < raw.len() {
            let value = raw[i];
            while i < raw.len() && raw[i] == value {
                seen += 1;
                i += 1;
            }
            counts.push(value);
            cumulative.push(seen as f64 / total);
        }
        let n_max = *counts.last().expect("non-empty");
        Ok(NullProbabilityFn {
            counts,
            cumulative,
            n_max,
            input_dim,
        })
    }

    /// Fraction of samples whose perturbation count is at most `n`.
    pub fn at_count(&self, n: usize) -> f64 {
        match self.counts.partition_point(|&c| c <= n) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    /// `f(epsilon)`: evaluated at `floor(epsilon * |X|)` features. A small
    /// guard keeps exact rationals like `n / |X|` from rounding down.
    pub fn at_fraction(&self, epsilon: f64) -> f64 {
        let n = (epsilon * self.input_dim as f64 + 1e-9).floor() as usize;
        self.at_count(n)
    }

    /// Smallest count at which the CDF reaches 1.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `(count, cumulative fraction)` breakpoints, ascending.
    pub fn breakpoints(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.counts.iter().copied().zip(self.cumulative.iter().copied())
    }

    /// CSV form: breakpoint rows, then trailing `n_max` and `input_dim` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "feature_count,cumulative_fraction")?;
        for (count, alpha) in self.breakpoints() {
            writeln!(w, "{count},{alpha}")?;
        }
        writeln!(w, "n_max,{}", self.n_max)?;
        writeln!(w, "input_dim,{}", self.input_dim)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("NULL-function CSV is empty"))??;
        if header != "feature_count,cumulative_fraction" {
            return Err(Error::format("NULL-function CSV has an unexpected header"));
        }
        let mut counts = Vec::new();
        let mut cumulative = Vec::new();
        let mut n_max = None;
        let mut input_dim = None;
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(',')
                .ok_or_else(|| Error::format(format!("malformed row '{line}'")))?;
            match key {
                "n_max" => {
                    n_max = Some(value.parse().map_err(|_| Error::format("bad n_max"))?)
                }
                "input_dim" => {
                    input_dim =
                        Some(value.parse().map_err(|_| Error::format("bad input_dim"))?)
                }
                count => {
                    counts.push(
                        count
                            .parse()
                            .map_err(|_| Error::format(format!("bad count '{count}'")))?,
                    );
                    cumulative.push(
                        value
                            .parse()
                            .map_err(|_| Error::format(format!("bad fraction '{value}'")))?,
                    );
                }
            }
        }
        let n_max = n_max.ok_or_else(|| Error::format("missing n_max row"))?;
        let input_dim = input_dim.ok_or_else(|| Error::format("missing input_dim row"))?;
        if counts.is_empty() {
            return Err(Error::format("NULL-function CSV has no breakpoints"));
        }
        if counts.last() != Some(&n_max) {
            return Err(Error::Consistency(
                "n_max row disagrees with the last breakpoint".into(),
            ));
        }
        Ok(NullProbabilityFn {
            counts,
            cumulative,
            n_max,
            input_dim,
        })
    }
}

/// Runs MG on every validation sample and builds the empirical CDF of the
/// perturbation counts. Samples MG cannot misclassify within
/// `max_features_cap` flips enter at the cap.
pub fn compute_null_fn<M>(
    model: &M,
    validation: &Dataset,
    max_features_cap: usize,
) -> Result<NullProbabilityFn>
where
    M: DifferentiableClassifier + Sync,
{
    if validation.is_empty() {
        return Err(Error::argument(
            "cannot compute the NULL-probability function on an empty set",
        ));
    }
    if max_features_cap == 0 {
        return Err(Error::argument("max_features_cap must be at least 1"));
    }
    let counts: Vec<Result<usize>> = validation
        .samples
        .par_iter()
        .map(|s| {
            let r = mg(model, &s.x, s.y, max_features_cap)?;
            Ok(if r.feasible {
                r.perturbation_l0
            } else {
                max_features_cap
            })
        })
        .collect();
    let counts: Vec<usize> = counts.into_iter().collect::<Result<_>>()?;
    NullProbabilityFn::from_counts(counts, validation.input_len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_matches_hand_computation() {
        let f = NullProbabilityFn::from_counts(vec![1, 2, 2, 3], 100).unwrap();
        assert!((f.at_fraction(0.01) - 0.25).abs() < 1e-15);
        assert!((f.at_fraction(0.02) - 0.75).abs() < 1e-15);
        assert!((f.at_fraction(0.03) - 1.0).abs() < 1e-15);
        assert_eq!(f.n_max(), 3);
        assert_eq!(f.at_count(0), 0.0);
        assert_eq!(f.at_count(7), 1.0);
    }

    #[test]
    fn single_count_is_a_single_step() {
        let f = NullProbabilityFn::from_counts(vec![1, 1, 1], 50).unwrap();
        assert_eq!(f.at_fraction(0.0), 0.0);
        assert_eq!(f.at_fraction(1.0 / 50.0), 1.0);
        assert_eq!(f.n_max(), 1);
    }

    #[test]
    fn infeasible_samples_enter_at_the_cap() {
        let f = NullProbabilityFn::from_counts(vec![1, 14], 100).unwrap();
        assert!((f.at_fraction(0.01) - 0.5).abs() < 1e-15);
        assert_eq!(f.n_max(), 14);
    }

    #[test]
    fn fraction_evaluation_is_stable_at_rational_breakpoints() {
        let f = NullProbabilityFn::from_counts(vec![3, 5], 784).unwrap();
        assert!((f.at_fraction(3.0 / 784.0) - 0.5).abs() < 1e-15);
        assert_eq!(f.at_fraction(5.0 / 784.0), 1.0);
        assert_eq!(f.at_fraction(2.9 / 784.0), 0.0);
    }

    #[test]
    fn rejects_empty_counts() {
        assert!(NullProbabilityFn::from_counts(vec![], 10).is_err());
    }

    #[test]
    fn monotone_and_bounded() {
        let f = NullProbabilityFn::from_counts(vec![0, 2, 2, 5, 9, 9, 9, 12], 64).unwrap();
        let mut prev = 0.0;
        for n in 0..=64 {
            let v = f.at_count(n);
            assert!(v >= prev);
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
        assert_eq!(f.at_count(f.n_max()), 1.0);
        assert!(f.at_count(f.n_max() - 1) < 1.0);
    }

    #[test]
    fn csv_round_trips() {
        let f = NullProbabilityFn::from_counts(vec![1, 2, 2, 3, 9], 128).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let parsed = NullProbabilityFn::read_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, f);
    }
}
