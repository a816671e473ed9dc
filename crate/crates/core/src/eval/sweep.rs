//! Multi-row sweeps producing one results table.
//!
//! ```toml
//! [base]
//! repetitions = 5
//! output_dir = "runs/table"
//!
//! [[rows]]
//! k = 16
//! s = 1
//!
//! [[rows]]
//! ansatz = "ra"
//! k = 8
//! s = 4
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::AnsatzKind;
use crate::error::{QkaError, Result};
use crate::optim::OptimizerKind;

use super::config::ExperimentConfig;
use super::experiment::{run_experiment_on, speed_up, ExperimentOutcome, ResultRow};
use super::report::write_results_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    /// Absent means the full training set.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "one")]
    pub s: usize,
    #[serde(default)]
    pub ansatz: Option<AnsatzKind>,
    #[serde(default)]
    pub optimizer: Option<OptimizerKind>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub base: ExperimentConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| QkaError::Config(e.to_string()))?;
        if cfg.rows.is_empty() {
            return Err(QkaError::Config("sweep has no rows".into()));
        }
        cfg.base.validate_fields()?;
        for cfg in cfg.row_configs(&cfg.base.output_dir, 0) {
            cfg.validate_fields()?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn apply(&self, row: &SweepRow) -> ExperimentConfig {
        let mut cfg = self.base.clone();
        cfg.k = row.k;
        cfg.s = row.s;
        cfg.speedup_baseline = false;
        if let Some(a) = row.ansatz {
            cfg.ansatz.kind = a;
        }
        if let Some(o) = row.optimizer {
            if o != cfg.optimizer.kind {
                cfg.optimizer = super::config::OptimizerSection {
                    kind: o,
                    ..Default::default()
                };
            }
        }
        cfg
    }

    /// One config per row plus the `k = m, s = 1` references that the table
    /// lacks, each with its own output directory under `out`.
    pub fn row_configs(&self, out: &Path, m: usize) -> Vec<ExperimentConfig> {
        let mut configs: Vec<ExperimentConfig> = self.rows.iter().map(|r| self.apply(r)).collect();
        let mut missing = Vec::new();
        for cfg in &configs {
            let has_ref = configs
                .iter()
                .chain(&missing)
                .any(|c| is_reference(c, m) && same_group(c, cfg));
            if !has_ref {
                missing.push(super::experiment::full_kernel_variant(cfg));
            }
        }
        configs.extend(missing);
        for cfg in &mut configs {
            cfg.output_dir = out.join(cfg.row_label(m));
        }
        configs
    }
}

fn is_reference(cfg: &ExperimentConfig, m: usize) -> bool {
    cfg.subset_size(m) == m && cfg.s == 1
}

fn same_group(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    a.ansatz == b.ansatz && a.optimizer == b.optimizer
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub experiments: Vec<ExperimentOutcome>,
}

/// Runs every row (in parallel), fills in speed-ups against the matching
/// full-kernel row and writes `results.csv` under the base output directory.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let data = cfg.base.dataset.load()?;
    let m = data.train.len();
    let out = cfg.base.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let configs = cfg.row_configs(&out, m);
    let mut seen = std::collections::HashSet::new();
    for c in &configs {
        c.validate_against(&data.train)?;
        if !seen.insert(c.output_dir.clone()) {
            return Err(QkaError::Config(format!("duplicate sweep row {}", c.row_label(m))));
        }
    }
    let experiments: Vec<ExperimentOutcome> = configs
        .par_iter()
        .map(|c| run_experiment_on(c, &data))
        .collect::<Result<_>>()?;

    let mut reference: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (c, e) in configs.iter().zip(&experiments) {
        if is_reference(c, m) {
            reference.insert((e.row.ansatz.clone(), e.row.optimizer.clone()), e.row.queries);
        }
    }
    let rows: Vec<ResultRow> = experiments
        .iter()
        .map(|e| {
            let mut row = e.row.clone();
            if let Some(full) = reference.get(&(row.ansatz.clone(), row.optimizer.clone())) {
                row.speed_up = Some(speed_up(*full, row.queries));
            }
            row
        })
        .collect();
    write_results_csv(&out.join("results.csv"), &rows)?;
    Ok(SweepOutcome { rows, experiments })
}
