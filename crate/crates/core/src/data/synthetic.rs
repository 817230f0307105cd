//! Gaussian-blob toy datasets for fast, deterministic tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::nn::FeatureVector;
use crate::rng::stream;

const BLOB_SIGMA: f64 = 0.05;

/// `n` samples from `classes` Gaussian blobs in `[0, 1]^dims`, with class
/// centers at pairwise distance at least `separation * sigma` (sigma = 0.05).
/// Labels round-robin over classes; everything is a pure function of `seed`.
pub fn synthetic_blobs(
    n: usize,
    dims: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::argument("blobs need at least two classes"));
    }
    if dims == 0 {
        return Err(Error::argument("blobs need at least one dimension"));
    }
    let centers = place_centers(dims, classes, separation * BLOB_SIGMA, seed)?;
    let mut rng = stream(seed, "blob-samples", 0);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        let values: Vec<f64> = centers[y]
            .iter()
            .map(|&c| (c + BLOB_SIGMA * gaussian(&mut rng)).clamp(0.0, 1.0))
            .collect();
        samples.push(LabeledSample {
            x: FeatureVector::new(values).expect("clamped"),
            y,
        });
    }
    Dataset::new(samples, classes, (1, 1, dims))
}

fn place_centers(dims: usize, classes: usize, min_dist: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream(seed, "blob-centers", 0);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut attempts = 0usize;
    while centers.len() < classes {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::config(format!(
                "cannot place {classes} centers at distance {min_dist:.3} in {dims} dims"
            )));
        }
        let candidate: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.15..0.85)).collect();
        let ok = centers.iter().all(|c| {
            let d2: f64 = c
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() >= min_dist
        });
        if ok {
            centers.push(candidate);
        }
    }
    Ok(centers)
}

/// Standard normal draw via Box-Muller; consumes exactly two uniforms.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{fit, hard_examples, Classifier, Layer, NetworkSpec, TrainParams};

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synthetic_blobs(64, 3, 4, 6.0, 11).unwrap();
        let b = synthetic_blobs(64, 3, 4, 6.0, 11).unwrap();
        assert_eq!(a, b);
        let c = synthetic_blobs(64, 3, 4, 6.0, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_samples_gives_empty_dataset() {
        let ds = synthetic_blobs(0, 2, 2, 6.0, 0).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.class_count, 2);
    }

    #[test]
    fn rejects_single_class() {
        assert!(synthetic_blobs(8, 2, 1, 6.0, 0).is_err());
    }

    #[test]
    fn well_separated_blobs_are_linearly_classifiable() {
        let ds = synthetic_blobs(300, 4, 3, 6.0, 21).unwrap();
        let spec = NetworkSpec::new(
            vec![Layer::Dense { units: 3 }, Layer::Softmax],
            (1, 1, 4),
            3,
            false,
        )
        .unwrap();
        let mut cls = Classifier::new(spec, 5).unwrap();
        let pairs: Vec<(FeatureVector, usize)> = ds
            .samples
            .iter()
            .map(|s| (s.x.clone(), s.y))
            .collect();
        let examples = hard_examples(&pairs);
        fit(
            &mut cls,
            &examples,
            30,
            &TrainParams {
                learning_rate: 0.5,
                batch_size: 16,
            },
            7,
        )
        .unwrap();
        let correct = ds
            .samples
            .iter()
            .filter(|s| {
                crate::nn::DifferentiableClassifier::predict(&cls, &s.x).unwrap() == s.y
            })
            .count();
        assert!(
            correct as f64 >= 0.99 * ds.len() as f64,
            "linear accuracy {correct}/{}",
            ds.len()
        );
    }
}
