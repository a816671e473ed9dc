//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! k = 16
//! s = 1
//! output_dir = "runs/he-k16"
//!
//! [dataset]
//! source = "havlicek"      # or "csv" with train = "...", test = "..."
//! m_train = 96
//!
//! [ansatz]
//! kind = "he"
//!
//! [optimizer]
//! kind = "spsa"
//! max_iterations = 200
//! ```
//!
//! Qubit counts are not configured: they follow the dataset's feature width.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuits::{AnsatzKind, AnsatzSpec, Entanglement, FeatureMapKind, FeatureMapSpec};
use crate::data::{generate_havlicek, load_embeddings_csv, stratified_split, Dataset, HavlicekParams};
use crate::error::{QkaError, Result};
use crate::kernel::{KernelMode, QuantumKernel, QueryConvention};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::svm::SvmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSpec {
    Havlicek(HavlicekParams),
    Csv(CsvSource),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Havlicek(HavlicekParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    /// Without a test file, a stratified hold-out of `test_fraction` is used.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_test_fraction() -> f64 {
    0.25
}

/// Train and test sets plus whatever describes how they were produced.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    pub manifest: serde_json::Value,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DatasetSpec::Havlicek(params) => {
                let (train, test, labeler) = generate_havlicek(params)?;
                let manifest = crate::data::GeneratorManifest::new(params, &labeler, &train, &test);
                Ok(LoadedData {
                    manifest: serde_json::to_value(manifest)?,
                    train,
                    test,
                })
            }
            DatasetSpec::Csv(src) => {
                let full = load_embeddings_csv(&src.train)?;
                let (train, test) = match &src.test {
                    Some(path) => (full, load_embeddings_csv(path)?),
                    None => {
                        let (fit, held) = stratified_split(&full.labels, src.test_fraction, src.split_seed)?;
                        (full.subset(&fit)?, full.subset(&held)?)
                    }
                };
                if train.dim() != test.dim() {
                    return Err(QkaError::DimensionMismatch {
                        context: "test vs train feature width",
                        expected: train.dim(),
                        found: test.dim(),
                    });
                }
                Ok(LoadedData {
                    manifest: serde_json::to_value(src)?,
                    train,
                    test,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapSection {
    #[serde(default = "default_fmap_kind")]
    pub kind: FeatureMapKind,
    #[serde(default = "default_fmap_reps")]
    pub reps: usize,
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

fn default_fmap_kind() -> FeatureMapKind {
    FeatureMapKind::Zz
}

fn default_fmap_reps() -> usize {
    2
}

impl Default for FeatureMapSection {
    fn default() -> Self {
        Self {
            kind: default_fmap_kind(),
            reps: default_fmap_reps(),
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSection {
    #[serde(default = "default_ansatz_kind")]
    pub kind: AnsatzKind,
    #[serde(default = "default_ansatz_reps")]
    pub reps: usize,
    #[serde(default)]
    pub entanglement: Entanglement,
}

fn default_ansatz_kind() -> AnsatzKind {
    AnsatzKind::He
}

fn default_ansatz_reps() -> usize {
    1
}

impl Default for AnsatzSection {
    fn default() -> Self {
        Self {
            kind: default_ansatz_kind(),
            reps: default_ansatz_reps(),
            entanglement: Entanglement::Linear,
        }
    }
}

/// Optimizer choice; unset fields take that optimizer's defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default)]
    pub kind: OptimizerKind,
    pub max_iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub perturbation: Option<f64>,
    pub tolerance: Option<f64>,
    pub fd_step: Option<f64>,
}

impl OptimizerSection {
    pub fn resolve(&self, seed: u64) -> OptimizerConfig {
        let base = OptimizerConfig::for_kind(self.kind);
        OptimizerConfig {
            kind: self.kind,
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            perturbation: self.perturbation.unwrap_or(base.perturbation),
            tolerance: self.tolerance.unwrap_or(base.tolerance),
            fd_step: self.fd_step.unwrap_or(base.fd_step),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub feature_map: FeatureMapSection,
    #[serde(default)]
    pub ansatz: AnsatzSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    /// Subset size; absent means the full training set.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "one")]
    pub s: usize,
    #[serde(default)]
    pub query_convention: QueryConvention,
    #[serde(default)]
    pub mode: KernelMode,
    /// `C` inside the training loss.
    #[serde(default = "default_train_c")]
    pub train_c: f64,
    #[serde(default = "default_svm_tol")]
    pub svm_tol: f64,
    /// Candidates for the final classifier's `C`.
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub render_svg: bool,
    /// Run the `k = m` reference to compute the speed-up of a sub-sampled row.
    #[serde(default = "yes")]
    pub speedup_baseline: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_train_c() -> f64 {
    1.0
}

fn default_svm_tol() -> f64 {
    SvmConfig::default().tol
}

pub fn default_c_grid() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0]
}

fn default_validation_fraction() -> f64 {
    0.2
}

fn default_repetitions() -> usize {
    5
}

fn default_cv_folds() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/experiment")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| QkaError::Config(e.to_string()))?;
        cfg.validate_fields()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| QkaError::Config(e.to_string()))
    }

    /// Checks that need no data.
    pub fn validate_fields(&self) -> Result<()> {
        let bad = |msg: String| Err(QkaError::Config(msg));
        if self.s == 0 {
            return bad("s must be >= 1".into());
        }
        if self.k.is_some_and(|k| k < 2) {
            return bad("k must be >= 2".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be >= 2".into());
        }
        if !(self.train_c.is_finite() && self.train_c > 0.0) {
            return bad(format!("train_c {} must be > 0", self.train_c));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return bad("c_grid must be a non-empty list of positive values".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)".into());
        }
        if self.feature_map.reps == 0 || self.ansatz.reps == 0 {
            return bad("circuit reps must be >= 1".into());
        }
        if let Some(c) = self.feature_map.bandwidth {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("bandwidth {c} must be > 0"));
            }
        }
        if let DatasetSpec::Havlicek(p) = &self.dataset {
            if p.n_qubits == 0 || p.m_train < 2 || p.m_test < 2 {
                return bad("havlicek dataset needs n_qubits >= 1 and at least 2 train/test points".into());
            }
        }
        self.optimizer
            .resolve(0)
            .validate()
            .map_err(|e| QkaError::Config(e.to_string()))
    }

    /// Checks against the loaded training set.
    pub fn validate_against(&self, train: &Dataset) -> Result<()> {
        self.validate_fields()?;
        let k = self.subset_size(train.len());
        if k > train.len() {
            return Err(QkaError::Config(format!("k={k} exceeds training size {}", train.len())));
        }
        self.quantum_kernel(train.dim()).validate()
    }

    pub fn subset_size(&self, m: usize) -> usize {
        self.k.unwrap_or(m)
    }

    pub fn quantum_kernel(&self, n_qubits: usize) -> QuantumKernel {
        let feature_map = FeatureMapSpec {
            kind: self.feature_map.kind,
            n_qubits,
            reps: self.feature_map.reps,
            bandwidth: self.feature_map.bandwidth,
        };
        let ansatz = AnsatzSpec {
            kind: self.ansatz.kind,
            n_qubits,
            reps: self.ansatz.reps,
            entanglement: self.ansatz.entanglement,
        };
        QuantumKernel::new(feature_map, ansatz).with_mode(self.mode)
    }

    pub fn svm(&self) -> SvmConfig {
        SvmConfig {
            c: self.train_c,
            tol: self.svm_tol,
        }
    }

    /// Directory-safe row label such as `he-spsa-k16-s1`.
    pub fn row_label(&self, m: usize) -> String {
        format!(
            "{}-{}-k{}-s{}",
            self.ansatz.kind.label().to_lowercase(),
            self.optimizer.kind.label().to_lowercase(),
            self.subset_size(m),
            self.s
        )
    }
}
