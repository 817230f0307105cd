use super::*;
use crate::attacks::{fgs, stg, AttackBudget, Norm};
use crate::data::synthetic_blobs;
use crate::nn::{Layer, NetworkSpec};

fn blob_spec(dims: usize, classes: usize, has_null: bool) -> NetworkSpec {
    let outputs = if has_null { classes + 1 } else { classes };
    NetworkSpec::new(
        vec![
            Layer::Dense { units: 24 },
            Layer::Relu,
            Layer::Dense { units: outputs },
            Layer::Softmax,
        ],
        (1, 1, dims),
        outputs,
        has_null,
    )
    .unwrap()
}

fn opt() -> TrainParams {
    TrainParams {
        learning_rate: 0.3,
        batch_size: 16,
    }
}

#[test]
fn robust_with_alpha_one_walks_the_plain_trajectory() {
    let data = synthetic_blobs(120, 6, 3, 5.0, 41).unwrap();
    let spec = blob_spec(6, 3, false);
    let config = RobustConfig {
        alpha: 1.0,
        norm: Norm::Linf,
        epsilon: 0.1,
        epochs: 4,
    };
    let (robust, _) = robust_train(&data, &config, &spec, &opt(), 5).unwrap();
    let (plain, _) = train_baseline(&data, &spec, &opt(), 4, 5).unwrap();
    let a: Vec<u64> = robust.params().iter().map(|p| p.to_bits()).collect();
    let b: Vec<u64> = plain.params().iter().map(|p| p.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn robust_training_resists_fgs_better_than_baseline() {
    // Blobs close enough that a 0.12 L-infinity shift can cross the boundary.
    let all = synthetic_blobs(400, 2, 2, 5.0, 43).unwrap();
    let train = all.slice(0..300).unwrap();
    let held_out = all.slice(300..400).unwrap();
    let spec = blob_spec(2, 2, false);
    let budget = AttackBudget::linf(0.12).unwrap();

    let (plain, _) = train_baseline(&train, &spec, &opt(), 12, 7).unwrap();
    let config = RobustConfig {
        alpha: 0.5,
        norm: Norm::Linf,
        epsilon: 0.12,
        epochs: 12,
    };
    let (robust, stats) = robust_train(&train, &config, &spec, &opt(), 7).unwrap();
    assert!(stats.iter().all(|s| s.adversarial_loss.is_some()));

    let adv_accuracy = |model: &Classifier| -> f64 {
        let correct = held_out
            .samples
            .iter()
            .filter(|s| {
                let r = fgs(model, &s.x, s.y, &budget).unwrap();
                model.predict(&r.x_star).unwrap() == s.y
            })
            .count();
        correct as f64 / held_out.len() as f64
    };
    let plain_adv = adv_accuracy(&plain);
    let robust_adv = adv_accuracy(&robust);
    assert!(
        robust_adv > plain_adv,
        "robust {robust_adv:.3} vs plain {plain_adv:.3}"
    );
}

#[test]
fn epoch_plan_mixes_near_alpha() {
    let mut rng = stream(9, "plan-test", 0);
    let plan = plan_epoch(&mut rng, 2000, 0.5, 12);
    let adversarial = plan.iter().filter(|b| b.is_some()).count() as f64 / 2000.0;
    assert!((0.45..=0.55).contains(&adversarial), "fraction {adversarial}");
    for n in plan.into_iter().flatten() {
        assert!((1..=12).contains(&n));
    }
}

#[test]
fn alpha_one_null_training_keeps_null_probability_low() {
    let all = synthetic_blobs(360, 6, 3, 6.0, 47).unwrap();
    let train = all.slice(0..240).unwrap();
    let validation = all.slice(240..360).unwrap();
    let spec = blob_spec(6, 3, true);
    let config = DefenseConfig {
        alpha: 1.0,
        q: 0.9,
        initial_epochs: 2,
        adversarial_epochs: 6,
    };
    let outcome = null_train(&train, &validation, &config, &spec, &opt(), 3).unwrap();
    let null_idx = spec.null_index().unwrap();
    let mean_null: f64 = validation
        .samples
        .iter()
        .map(|s| outcome.classifier.forward(&s.x).unwrap().get(null_idx))
        .sum::<f64>()
        / validation.len() as f64;
    assert!(mean_null < 0.05, "mean NULL probability {mean_null}");
}

#[test]
fn null_training_raises_null_probability_with_perturbation() {
    // Digit images: flipped pixels are salt-and-pepper marks the NULL slot
    // can learn to detect without hurting clean accuracy.
    let train = crate::data::synthetic_digits(800, 0, 53).unwrap();
    let validation = crate::data::synthetic_digits(200, 800, 53).unwrap();
    let dim = train.input_len();
    let spec = NetworkSpec::new(
        vec![
            Layer::Dense { units: 64 },
            Layer::Relu,
            Layer::Dense { units: 32 },
            Layer::Relu,
            Layer::Dense { units: 11 },
            Layer::Softmax,
        ],
        train.input_shape,
        11,
        true,
    )
    .unwrap();
    let config = DefenseConfig {
        alpha: 0.5,
        q: 0.9,
        initial_epochs: 1,
        adversarial_epochs: 8,
    };
    let opt = TrainParams {
        learning_rate: 0.15,
        batch_size: 32,
    };
    let outcome = null_train(&train, &validation, &config, &spec, &opt, 11).unwrap();
    let null_idx = spec.null_index().unwrap();
    let n_max = outcome.null_fn.n_max();
    assert!(n_max >= 1 && n_max <= dim / 2);

    let mut clean_null = 0.0;
    let mut perturbed_null = 0.0;
    let probes = &validation.samples[..50];
    for s in probes {
        clean_null += outcome.classifier.forward(&s.x).unwrap().get(null_idx);
        let probe = stg(&outcome.classifier, &s.x, n_max).unwrap();
        perturbed_null += outcome.classifier.forward(&probe).unwrap().get(null_idx);
    }
    clean_null /= probes.len() as f64;
    perturbed_null /= probes.len() as f64;
    assert!(
        perturbed_null > clean_null + 0.2,
        "clean {clean_null:.3} vs perturbed {perturbed_null:.3}"
    );
    // Targets never place more than f(n_max) = 1 on the NULL slot.
    assert_eq!(outcome.null_fn.at_count(n_max), 1.0);
}

#[test]
fn null_training_rejects_degenerate_validation() {
    let all = synthetic_blobs(240, 6, 2, 6.0, 59).unwrap();
    let train = all.slice(0..180).unwrap();
    let mut validation = all.slice(180..240).unwrap();
    // Swap every validation label: MG sees each sample as already
    // misclassified, so every perturbation count is zero.
    for s in &mut validation.samples {
        s.y = 1 - s.y;
    }
    let spec = blob_spec(6, 2, true);
    let config = DefenseConfig {
        alpha: 0.5,
        q: 0.9,
        initial_epochs: 3,
        adversarial_epochs: 2,
    };
    match null_train(&train, &validation, &config, &spec, &opt(), 13) {
        Err(Error::Config(_)) => {}
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn null_training_requires_a_null_spec() {
    let all = synthetic_blobs(60, 4, 2, 6.0, 61).unwrap();
    let spec = blob_spec(4, 2, false);
    let err = null_train(
        &all,
        &all,
        &DefenseConfig::default(),
        &spec,
        &opt(),
        1,
    );
    assert!(err.is_err());
}

#[test]
fn compute_null_fn_is_deterministic_and_monotone() {
    let all = synthetic_blobs(300, 6, 3, 6.0, 67).unwrap();
    let train = all.slice(0..200).unwrap();
    let validation = all.slice(200..300).unwrap();
    let spec = blob_spec(6, 3, true);
    let (classifier, _) = train_baseline(&train, &spec, &opt(), 6, 17).unwrap();

    let cap = default_feature_cap(validation.input_len());
    let f1 = compute_null_fn(&classifier, &validation, cap).unwrap();
    let f2 = compute_null_fn(&classifier, &validation, cap).unwrap();
    assert_eq!(f1, f2);

    let mut prev = 0.0;
    for n in 0..=validation.input_len() {
        let v = f1.at_count(n);
        assert!(v >= prev);
        prev = v;
    }
    assert_eq!(f1.at_count(f1.n_max()), 1.0);
    assert!(compute_null_fn(&classifier, &validation.slice(0..0).unwrap(), cap).is_err());
}
