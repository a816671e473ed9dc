//! Repeated train → finalize → score runs and their on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::initial_theta;
use crate::data::{stratified_folds, Dataset};
use crate::error::Result;
use crate::kernel::{query_cost, KernelMode, QueryLedger};
use crate::metrics::{f1_score, mean, min_max_normalize, roc_auc, std_dev};
use crate::seeding;
use crate::svm::{decision_scores, predict, solve_dual};
use crate::trainer::{finalize, kernel_for_svm, train, TrainRecord, TrainSetup};

use super::config::{ExperimentConfig, LoadedData};
use super::report;

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub ansatz: String,
    pub k: usize,
    pub s: usize,
    pub roc_auc: f64,
    pub f1: f64,
    /// Mean queries up to the stopping iteration plus the final kernel.
    pub queries: f64,
    pub speed_up: Option<f64>,
    pub optimizer: String,
    pub cv_std: f64,
}

/// Outcome of one seeded repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub seed: u64,
    pub record: TrainRecord,
    pub c: f64,
    pub validation_auc: Option<f64>,
    pub roc_auc: f64,
    pub f1: f64,
    /// Queries up to the stopping iteration plus the final kernel.
    pub queries: u64,
    /// Every training and final-kernel query, including iterations past the stop.
    pub ledger_total: u64,
    pub finalize_queries: u64,
    /// Test-kernel queries, tracked separately from the training cost.
    pub scoring_queries: u64,
    pub cv_std: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub row: ResultRow,
    pub repetitions: Vec<Repetition>,
    pub baseline: Option<Box<ExperimentOutcome>>,
    pub output_dir: PathBuf,
}

/// Standard deviation of per-fold ROC AUC under stratified cross-validation on
/// a precomputed kernel.
pub fn cross_validated_auc_std(
    gram: &DMatrix<f64>,
    labels: &[f64],
    c: f64,
    tol: f64,
    n_folds: usize,
    seed: u64,
) -> Result<f64> {
    let plan = stratified_folds(labels, n_folds, seed)?;
    let mut aucs = Vec::with_capacity(plan.n_folds);
    for f in 0..plan.n_folds {
        let (fit, held) = plan.split(f);
        let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| gram[(r[i], c[j])]);
        let y_fit: Vec<f64> = fit.iter().map(|&i| labels[i]).collect();
        let y_held: Vec<f64> = held.iter().map(|&i| labels[i]).collect();
        let sol = solve_dual(&sub(&fit, &fit), &y_fit, c, tol)?;
        aucs.push(roc_auc(&decision_scores(&sol, &sub(&held, &fit))?, &y_held)?);
    }
    Ok(std_dev(&aucs))
}

fn repetition_mode(mode: KernelMode, rep_seed: u64) -> KernelMode {
    match mode {
        KernelMode::Exact => KernelMode::Exact,
        KernelMode::Shots { shots, seed } => KernelMode::Shots {
            shots,
            seed: seeding::derive_seed(seed, &[rep_seed]),
        },
    }
}

/// Seed of repetition `r`; everything random in that run derives from it.
pub fn repetition_seed(base: u64, r: usize) -> u64 {
    seeding::derive_seed(base, &[0x5245_5045, r as u64])
}

/// Training setup and initial parameters for repetition `r`.
pub fn repetition_setup(cfg: &ExperimentConfig, train_set: &Dataset, r: usize) -> (TrainSetup, Vec<f64>) {
    let seed = repetition_seed(cfg.seed, r);
    let kernel = cfg
        .quantum_kernel(train_set.dim())
        .with_mode(repetition_mode(cfg.mode, seed));
    let theta = initial_theta(kernel.n_params(), seeding::derive_seed(seed, &[1]));
    let setup = TrainSetup {
        optimizer: cfg.optimizer.resolve(seeding::derive_seed(seed, &[2])),
        svm: cfg.svm(),
        k: cfg.subset_size(train_set.len()),
        s: cfg.s,
        scheduler_seed: seeding::derive_seed(seed, &[3]),
        kernel,
    };
    (setup, theta)
}

pub fn run_repetition(cfg: &ExperimentConfig, data: &LoadedData, r: usize) -> Result<Repetition> {
    let seed = repetition_seed(cfg.seed, r);
    let (setup, theta_init) = repetition_setup(cfg, &data.train, r);
    let ledger = QueryLedger::new(cfg.query_convention);
    let record = train(&data.train, &setup, &theta_init, &ledger)?;
    let model = finalize(
        &record.theta_opt,
        &data.train,
        &setup.kernel,
        &setup.svm,
        &cfg.c_grid,
        &ledger,
        seeding::derive_seed(seed, &[4]),
    )?;
    let finalize_queries = ledger.total_for("finalize");
    debug_assert_eq!(finalize_queries, query_cost(data.train.len(), cfg.query_convention));

    let scoring = QueryLedger::new(cfg.query_convention);
    let k_test = setup.kernel.cross(
        &data.test.features,
        &data.train.features,
        &record.theta_opt,
        &scoring,
        "score",
        seeding::derive_seed(seed, &[5]),
    )?;
    let scores = decision_scores(&model.solution, &k_test)?;
    let gram = kernel_for_svm(&model.kernel, setup.kernel.mode);
    Ok(Repetition {
        index: r,
        seed,
        c: model.c,
        validation_auc: model.validation_auc,
        roc_auc: roc_auc(&scores, &data.test.labels)?,
        f1: f1_score(&predict(&scores), &data.test.labels)?,
        queries: record.queries_at_stop + finalize_queries,
        ledger_total: ledger.total(),
        finalize_queries,
        scoring_queries: scoring.total(),
        cv_std: cross_validated_auc_std(
            &gram,
            &data.train.labels,
            model.c,
            cfg.svm_tol,
            cfg.cv_folds,
            seeding::derive_seed(seed, &[6]),
        )?,
        record,
    })
}

/// Averages repetitions into a row; `speed_up` is filled in by the caller.
pub fn summarize(cfg: &ExperimentConfig, m: usize, reps: &[Repetition]) -> ResultRow {
    let avg = |f: fn(&Repetition) -> f64| mean(&reps.iter().map(f).collect::<Vec<_>>());
    ResultRow {
        ansatz: cfg.ansatz.kind.label().to_string(),
        k: cfg.subset_size(m),
        s: cfg.s,
        roc_auc: avg(|r| r.roc_auc),
        f1: avg(|r| r.f1),
        queries: avg(|r| r.queries as f64),
        speed_up: None,
        optimizer: cfg.optimizer.kind.label().to_string(),
        cv_std: avg(|r| r.cv_std),
    }
}

pub fn speed_up(full_queries: f64, row_queries: f64) -> f64 {
    full_queries / row_queries
}

/// The same experiment on the full training set, used as the speed-up reference.
pub fn full_kernel_variant(cfg: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        k: None,
        s: 1,
        speedup_baseline: false,
        ..cfg.clone()
    }
}

/// Runs all repetitions without touching the filesystem.
pub fn evaluate(cfg: &ExperimentConfig, data: &LoadedData) -> Result<(ResultRow, Vec<Repetition>)> {
    cfg.validate_against(&data.train)?;
    let reps = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(cfg, data, r))
        .collect::<Result<Vec<_>>>()?;
    let mut row = summarize(cfg, data.train.len(), &reps);
    if row.k == data.train.len() && row.s == 1 {
        row.speed_up = Some(1.0);
    }
    Ok((row, reps))
}

fn evaluate_with_baseline(cfg: &ExperimentConfig, data: &LoadedData, dir: &Path) -> Result<ExperimentOutcome> {
    let (mut row, repetitions) = evaluate(cfg, data)?;
    let baseline = if row.speed_up.is_none() && cfg.speedup_baseline {
        let full_cfg = full_kernel_variant(cfg);
        let outcome = evaluate_with_baseline(&full_cfg, data, &dir.join("baseline"))?;
        row.speed_up = Some(speed_up(outcome.row.queries, row.queries));
        Some(Box::new(outcome))
    } else {
        None
    };
    let outcome = ExperimentOutcome {
        row,
        repetitions,
        baseline,
        output_dir: dir.to_path_buf(),
    };
    report::write_experiment(dir, cfg, data, &outcome)?;
    Ok(outcome)
}

/// Runs in `<dir>.partial` and renames on success; nothing is left behind on failure.
pub fn with_staging_dir<T>(dir: &Path, work: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let mut staging = dir.as_os_str().to_owned();
    staging.push(".partial");
    let staging = PathBuf::from(staging);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    match work(&staging) {
        Ok(value) => {
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
            fs::rename(&staging, dir)?;
            Ok(value)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn relocate(outcome: &mut ExperimentOutcome, from: &Path, to: &Path) {
    if let Ok(rest) = outcome.output_dir.strip_prefix(from) {
        outcome.output_dir = if rest.as_os_str().is_empty() {
            to.to_path_buf()
        } else {
            to.join(rest)
        };
    }
    if let Some(b) = outcome.baseline.as_mut() {
        relocate(b, from, to);
    }
}

/// Runs an experiment on already-loaded data and writes its artifacts.
pub fn run_experiment_on(cfg: &ExperimentConfig, data: &LoadedData) -> Result<ExperimentOutcome> {
    let dir = cfg.output_dir.clone();
    let mut outcome = with_staging_dir(&dir, |staging| evaluate_with_baseline(cfg, data, staging))?;
    let staged = outcome.output_dir.clone();
    relocate(&mut outcome, &staged, &dir);
    Ok(outcome)
}

/// Loads the configured dataset, runs every repetition and writes:
/// `results.csv`, `config.toml`, `manifest.json`, and per repetition
/// `train_record.json`, `loss_curve.csv` (optionally `loss_curve.svg`).
/// Sub-sampled runs also get a `baseline/` directory with the `k = m` run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate_fields()?;
    let data = cfg.dataset.load()?;
    run_experiment_on(cfg, &data)
}

/// `(iteration, raw_loss, normalized_loss)` rows with min-max scaling.
pub fn loss_curve(record: &TrainRecord) -> Vec<(usize, f64, f64)> {
    let raw = record.losses();
    let norm = min_max_normalize(&raw);
    raw.into_iter()
        .zip(norm)
        .enumerate()
        .map(|(i, (r, n))| (i, r, n))
        .collect()
}
