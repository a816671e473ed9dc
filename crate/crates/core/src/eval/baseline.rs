//! Classical-kernel SVM baselines with a validation grid search.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, Dataset};
use crate::error::{QkaError, Result};
use crate::metrics::{f1_score, roc_auc};
use crate::svm::{decision_scores, predict, solve_dual};

use super::experiment::{cross_validated_auc_std, ResultRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicalKernelKind {
    Linear,
    Poly,
    Rbf,
}

impl ClassicalKernelKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Poly => "poly",
            Self::Rbf => "rbf",
        }
    }

    fn uses_gamma(self) -> bool {
        self != Self::Linear
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalKernel {
    pub kind: ClassicalKernelKind,
    pub gamma: f64,
    pub degree: u32,
}

impl ClassicalKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot = || a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        match self.kind {
            ClassicalKernelKind::Linear => dot(),
            ClassicalKernelKind::Poly => (self.gamma * dot() + 1.0).powi(self.degree as i32),
            ClassicalKernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                (-self.gamma * d2).exp()
            }
        }
    }

    pub fn gram(&self, rows: &[&[f64]], cols: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.eval(rows[i], cols[j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineGrid {
    pub kinds: Vec<ClassicalKernelKind>,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub degree: u32,
    pub validation_fraction: f64,
}

impl Default for BaselineGrid {
    fn default() -> Self {
        Self {
            kinds: vec![
                ClassicalKernelKind::Linear,
                ClassicalKernelKind::Poly,
                ClassicalKernelKind::Rbf,
            ],
            c: vec![0.1, 1.0, 10.0, 100.0],
            gamma: vec![0.01, 0.1, 1.0],
            degree: 3,
            validation_fraction: 0.2,
        }
    }
}

impl BaselineGrid {
    /// Every (kernel, C) combination in grid order.
    pub fn candidates(&self) -> Vec<(ClassicalKernel, f64)> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            let gammas: &[f64] = if kind.uses_gamma() { &self.gamma } else { &[1.0] };
            for &gamma in gammas {
                for &c in &self.c {
                    out.push((
                        ClassicalKernel {
                            kind,
                            gamma,
                            degree: self.degree,
                        },
                        c,
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub row: ResultRow,
    pub kernel: ClassicalKernel,
    pub c: f64,
    /// Absent when the grid has a single candidate.
    pub validation_auc: Option<f64>,
}

fn rows<'a>(ds: &'a Dataset, idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter().map(|&i| ds.features[i].as_slice()).collect()
}

fn pick(labels: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Validation AUC of one candidate fitted on `fit` and scored on `val`.
pub fn validation_auc(
    train: &Dataset,
    fit: &[usize],
    val: &[usize],
    kernel: &ClassicalKernel,
    c: f64,
    tol: f64,
) -> Result<f64> {
    let fit_rows = rows(train, fit);
    let sol = solve_dual(&kernel.gram(&fit_rows, &fit_rows), &pick(&train.labels, fit), c, tol)?;
    let scores = decision_scores(&sol, &kernel.gram(&rows(train, val), &fit_rows))?;
    roc_auc(&scores, &pick(&train.labels, val))
}

/// Grid search on a stratified validation split, refit on all training data,
/// then score on the test set.
pub fn classical_baseline(
    train: &Dataset,
    test: &Dataset,
    grid: &BaselineGrid,
    cv_folds: usize,
    seed: u64,
) -> Result<BaselineOutcome> {
    if train.dim() != test.dim() {
        return Err(QkaError::DimensionMismatch {
            context: "test vs train feature width",
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let candidates = grid.candidates();
    let tol = crate::svm::SvmConfig::default().tol;
    let (kernel, c, validation_auc) = match candidates.as_slice() {
        [] => return Err(QkaError::invalid("baseline grid is empty")),
        [(kernel, c)] => (*kernel, *c, None),
        _ => {
            let (fit, val) = stratified_split(&train.labels, grid.validation_fraction, seed)?;
            let mut best: Option<(ClassicalKernel, f64, f64)> = None;
            for (kernel, c) in &candidates {
                let auc = validation_auc(train, &fit, &val, kernel, *c, tol)?;
                if best.is_none_or(|(_, _, b)| auc > b) {
                    best = Some((*kernel, *c, auc));
                }
            }
            let (k, c, auc) = best.expect("non-empty grid");
            (k, c, Some(auc))
        }
    };
    let all: Vec<usize> = (0..train.len()).collect();
    let train_rows = rows(train, &all);
    let gram = kernel.gram(&train_rows, &train_rows);
    let sol = solve_dual(&gram, &train.labels, c, tol)?;
    let test_rows: Vec<&[f64]> = test.features.iter().map(Vec::as_slice).collect();
    let scores = decision_scores(&sol, &kernel.gram(&test_rows, &train_rows))?;
    let row = ResultRow {
        ansatz: kernel.kind.label().to_string(),
        k: train.len(),
        s: 1,
        roc_auc: roc_auc(&scores, &test.labels)?,
        f1: f1_score(&predict(&scores), &test.labels)?,
        queries: 0.0,
        speed_up: None,
        optimizer: "-".into(),
        cv_std: cross_validated_auc_std(&gram, &train.labels, c, tol, cv_folds, seed)?,
    };
    Ok(BaselineOutcome {
        row,
        kernel,
        c,
        validation_auc,
    })
}
