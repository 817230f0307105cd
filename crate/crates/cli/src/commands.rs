//! Experiment pipelines behind the CLI subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::Rng;

use nullnet_core::data::{synthetic_blobs, synthetic_digits, Dataset};
use nullnet_core::defense::{
    null_train, robust_train, train_baseline, DefenseConfig, NullTrainOutcome, RobustConfig,
};
use nullnet_core::eval::{
    accuracy_table, substitute_success_rate, test_accuracy, transferability_rate,
    write_reports_csv, EvalMode, EvaluationReport,
};
use nullnet_core::nn::{checkpoint, EpochStats, NetworkSpec, TrainParams};
use nullnet_core::rng::stream;
use nullnet_core::threat::{
    generate_transfer_set, train_substitute_blackbox, train_substitute_blind,
    AdversaryDataset, AttackKind, InProcessOracle, NullHandling, Oracle, OracleServer,
    RemoteOracle, SubstituteSchedule, TransferSet,
};
use nullnet_core::attacks::{write_records_csv, Norm};

use crate::config::{AttackChoice, DatasetKind, DefenseKind, ExperimentConfig, ThreatKind};

/// Where the attack command sends its queries.
pub enum TargetRef {
    Checkpoint(PathBuf),
    Oracle(String),
}

pub fn build_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let (train_n, val_n, test_n) = (
        config.train_samples,
        config.validation_samples,
        config.test_samples,
    );
    match config.dataset {
        DatasetKind::Digits => Ok((
            synthetic_digits(train_n, 0, config.seed)?,
            synthetic_digits(val_n, train_n as u64, config.seed)?,
            synthetic_digits(test_n, (train_n + val_n) as u64, config.seed)?,
        )),
        DatasetKind::Blobs => {
            let all = synthetic_blobs(
                train_n + val_n + test_n,
                config.blob_dims,
                config.blob_classes,
                config.blob_separation,
                config.seed,
            )?;
            Ok((
                all.slice(0..train_n)?,
                all.slice(train_n..train_n + val_n)?,
                all.slice(train_n + val_n..train_n + val_n + test_n)?,
            ))
        }
    }
}

fn target_spec(config: &ExperimentConfig, dataset: &Dataset) -> Result<NetworkSpec> {
    let has_null = config.defense == DefenseKind::Null;
    let class_count = dataset.class_count + usize::from(has_null);
    Ok(NetworkSpec::profile(
        &config.network,
        dataset.input_shape,
        class_count,
        has_null,
    )?)
}

fn train_params(config: &ExperimentConfig) -> TrainParams {
    TrainParams {
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
    }
}

fn write_training_log(path: &Path, stats: &[EpochStats]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,clean_loss,adversarial_loss,validation_accuracy")?;
    for s in stats {
        let adv = s
            .adversarial_loss
            .map(|v| v.to_string())
            .unwrap_or_default();
        let val = s
            .validation_accuracy
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(w, "{},{},{adv},{val}", s.epoch, s.clean_loss)?;
    }
    Ok(())
}

pub fn cmd_train(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (train, validation, test) = build_datasets(config)?;
    let spec = target_spec(config, &train)?;
    let opt = train_params(config);

    let (classifier, stats) = match config.defense {
        DefenseKind::None => train_baseline(&train, &spec, &opt, config.epochs, config.seed)?,
        DefenseKind::Robust0 | DefenseKind::RobustInf => {
            let robust = RobustConfig {
                alpha: config.alpha,
                norm: if config.defense == DefenseKind::Robust0 {
                    Norm::L0
                } else {
                    Norm::Linf
                },
                epsilon: config.epsilon,
                epochs: config.epochs,
            };
            robust_train(&train, &robust, &spec, &opt, config.seed)?
        }
        DefenseKind::Null => {
            let defense = DefenseConfig {
                alpha: config.alpha,
                q: config.q,
                initial_epochs: config.initial_epochs,
                adversarial_epochs: config.adversarial_epochs,
            };
            let NullTrainOutcome {
                classifier,
                null_fn,
                stats,
            } = null_train(&train, &validation, &defense, &spec, &opt, config.seed)?;
            let mut w = BufWriter::new(File::create(out_dir.join("null_fn.csv"))?);
            null_fn.write_csv(&mut w)?;
            (classifier, stats)
        }
    };

    checkpoint::save(&classifier, &out_dir.join("checkpoint.ndf"))?;
    write_training_log(&out_dir.join("training_log.csv"), &stats)?;

    let report = test_accuracy(&classifier, &test)?;
    println!(
        "trained {} ({:?}) -> {}",
        config.network,
        config.defense,
        out_dir.join("checkpoint.ndf").display()
    );
    println!(
        "test accuracy: {:.4} ({}/{})",
        report.value, report.numerator, report.denominator
    );
    Ok(())
}

fn connect_target(target: &TargetRef) -> Result<Box<dyn Oracle>> {
    Ok(match target {
        TargetRef::Checkpoint(path) => {
            let classifier = checkpoint::load(path)
                .with_context(|| format!("cannot load checkpoint {}", path.display()))?;
            Box::new(InProcessOracle::new(classifier))
        }
        TargetRef::Oracle(addr) => Box::new(RemoteOracle::connect(addr.as_str())?),
    })
}

pub fn cmd_attack(config: &ExperimentConfig, target: &TargetRef, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (_, validation, _) = build_datasets(config)?;
    let adversary = AdversaryDataset::carve(
        &validation,
        config.adversary_train,
        config.adversary_validation,
    )?;
    let substitute_spec = NetworkSpec::profile(
        &config.network,
        validation.input_shape,
        validation.class_count,
        false,
    )?;
    let opt = train_params(config);
    let oracle = connect_target(target)?;

    let substitute = match config.threat {
        ThreatKind::Blind => train_substitute_blind(
            &adversary,
            &substitute_spec,
            &opt,
            config.substitute_epochs,
            config.seed,
        )?,
        ThreatKind::BlackBox => {
            let schedule = SubstituteSchedule {
                initial_epochs: config.substitute_epochs,
                adversarial_rounds: config.adversarial_rounds,
                epsilon_grid: config.epsilon_grid.clone(),
                null_handling: if config.null_handling == "discard" {
                    NullHandling::Discard
                } else {
                    NullHandling::Augment
                },
            };
            train_substitute_blackbox(
                &adversary,
                oracle.as_ref(),
                &substitute_spec,
                &schedule,
                &opt,
                config.seed,
            )?
            .0
        }
    };
    let training_queries = oracle.query_count();

    // Generation pool: everything the adversary holds.
    let mut pool_samples = adversary.train.samples.clone();
    pool_samples.extend(adversary.validation.samples.iter().cloned());
    let pool = Dataset::new(pool_samples, validation.class_count, validation.input_shape)?;

    let (kind, mode) = match config.attack {
        AttackChoice::Grad0 => (AttackKind::MisclassifyGrad0, EvalMode::Misclassification),
        AttackChoice::Fgs => (AttackKind::MisclassifyFgs, EvalMode::Misclassification),
        AttackChoice::Greedy => (AttackKind::TargetedGreedy, EvalMode::Targeted),
    };
    let targets: Option<Vec<usize>> = (kind == AttackKind::TargetedGreedy).then(|| {
        pool.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = stream(config.seed, "greedy-targets", i as u64);
                let offset = rng.gen_range(1..pool.class_count);
                (s.y + offset) % pool.class_count
            })
            .collect()
    });

    let mut sets: Vec<(f64, TransferSet)> = Vec::new();
    for &eps in &config.epsilon_grid {
        let set = generate_transfer_set(&substitute, &pool, kind, eps, targets.as_deref())?;
        sets.push((eps, set));
    }

    // Persist the feasible adversarial batch.
    let attack_name = match config.attack {
        AttackChoice::Grad0 => "grad0",
        AttackChoice::Fgs => "fgs",
        AttackChoice::Greedy => "greedy",
    };
    let records: Vec<_> = sets
        .iter()
        .flat_map(|(_, s)| s.examples.iter().map(|e| e.record.clone()))
        .collect();
    let transfer_path = out_dir.join(format!("transfer_{attack_name}.csv"));
    write_records_csv(BufWriter::new(File::create(&transfer_path)?), &records)?;

    let mut reports: Vec<EvaluationReport> = Vec::new();
    reports.push(EvaluationReport {
        metric_name: "oracle_queries".to_string(),
        numerator: training_queries as usize,
        denominator: 1,
        value: training_queries as f64,
        breakdown: Vec::new(),
        mode: None,
    });
    reports.push(substitute_success_rate(&sets)?);

    let merged: Vec<_> = sets
        .iter()
        .flat_map(|(_, s)| s.examples.iter().cloned())
        .collect();
    if merged.is_empty() {
        println!("no examples were feasible on the substitute; nothing to transfer");
    } else {
        let report =
            transferability_rate(oracle.as_ref(), &merged, mode, validation.class_count)?;
        println!(
            "transferability ({attack_name}): {:.4} ({}/{})",
            report.value, report.numerator, report.denominator
        );
        for (eps, num, den, value) in &report.breakdown {
            println!("  eps {eps}: {value:.4} ({num}/{den})");
        }
        reports.push(report);
    }
    println!("substitute training oracle queries: {training_queries}");

    let report_path = out_dir.join("report.csv");
    write_reports_csv(BufWriter::new(File::create(&report_path)?), &reports)?;
    println!("wrote {} and {}", transfer_path.display(), report_path.display());
    Ok(())
}

pub fn cmd_serve_oracle(checkpoint_path: &Path, port: u16) -> Result<()> {
    let classifier = checkpoint::load(checkpoint_path)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint_path.display()))?;
    let server = OracleServer::bind(&format!("127.0.0.1:{port}"), classifier)
        .map_err(|e| anyhow!("{e}"))?;
    println!("listening on {}", server.local_addr()?);
    let oracle = server.oracle();
    std::thread::spawn(move || {
        let mut last = 0;
        loop {
            std::thread::sleep(std::time::Duration::from_secs(5));
            let count = oracle.query_count();
            if count != last {
                println!("served {count} queries");
                last = count;
            }
        }
    });
    server.run().map_err(|e| anyhow!("{e}"))
}

pub fn cmd_evaluate(checkpoint_path: &Path, config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let classifier = checkpoint::load(checkpoint_path)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint_path.display()))?;
    let (_, _, test) = build_datasets(config)?;
    if classifier.spec().input_len() != test.input_len() {
        bail!(
            "checkpoint expects {} inputs but the configured dataset has {}",
            classifier.spec().input_len(),
            test.input_len()
        );
    }
    let report = test_accuracy(&classifier, &test)?;
    println!(
        "test accuracy: {:.4} ({}/{})",
        report.value, report.numerator, report.denominator
    );
    write_reports_csv(
        BufWriter::new(File::create(out_dir.join("accuracy.csv"))?),
        std::slice::from_ref(&report),
    )?;
    let table = accuracy_table(&[(
        checkpoint_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "classifier".to_string()),
        report.value,
    )]);
    std::fs::write(out_dir.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}
