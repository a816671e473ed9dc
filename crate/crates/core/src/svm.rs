//! Soft-margin SVM dual solved by SMO.
//!
//! Maximizes `Σ a_i − ½ Σ a_i a_j y_i y_j K_ij` subject to `0 ≤ a_i ≤ C` and
//! `Σ a_i y_i = 0`. The optimal objective doubles as the kernel alignment loss.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{QkaError, Result};
use crate::kernel::min_eigenvalue;

/// Eigenvalues below this are rejected; those between it and zero are tolerated.
pub const PSD_TOLERANCE: f64 = 1e-6;
const TAU: f64 = 1e-12;
const MAX_ITERATIONS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub labels: Vec<f64>,
    pub c: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmSolution {
    pub fn support_indices(&self) -> Vec<usize> {
        self.alphas
            .iter()
            .enumerate()
            .filter(|(_, a)| **a > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn validate_labels(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(QkaError::invalid(format!("label {bad} is not ±1")));
    }
    let pos = y.iter().filter(|v| **v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(QkaError::SingleClass);
    }
    Ok(())
}

fn validate(k: &DMatrix<f64>, y: &[f64], c: f64, tol: f64) -> Result<()> {
    if k.nrows() != k.ncols() {
        return Err(QkaError::invalid("kernel must be square"));
    }
    if k.nrows() != y.len() {
        return Err(QkaError::DimensionMismatch {
            context: "labels vs kernel",
            expected: k.nrows(),
            found: y.len(),
        });
    }
    validate_labels(y)?;
    if !(c.is_finite() && c > 0.0) {
        return Err(QkaError::invalid(format!("C must be > 0, got {c}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(QkaError::invalid(format!("tolerance must be > 0, got {tol}")));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(QkaError::NonFinite("kernel"));
    }
    let min_eig = min_eigenvalue(k);
    if min_eig < -PSD_TOLERANCE {
        return Err(QkaError::NotPositiveSemidefinite {
            min_eigenvalue: min_eig,
        });
    }
    Ok(())
}

pub fn dual_objective(k: &DMatrix<f64>, y: &[f64], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += alphas[j] * y[j] * k[(i, j)];
        }
        quad += alphas[i] * y[i] * row;
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

pub fn solve_dual(k: &DMatrix<f64>, y: &[f64], c: f64, tol: f64) -> Result<SvmSolution> {
    validate(k, y, c, tol)?;
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let mut a = vec![0.0; n];
    // gradient of ½aᵀQa − Σa
    let mut g = vec![-1.0; n];
    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * g[t];
            if in_up(t, &a) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(t, &a) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (a[i], a[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }

        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for (t, gt) in g.iter_mut().enumerate() {
            *gt += q(t, i) * di + q(t, j) * dj;
        }
    }

    let bias = compute_bias(&a, y, &g, c);
    Ok(SvmSolution {
        dual_objective: dual_objective(k, y, &a),
        alphas: a,
        bias,
        labels: y.to_vec(),
        c,
        iterations,
        converged,
    })
}

/// Average of `y_i − Σ_j a_j y_j K_ij` over free vectors, or the midpoint of
/// the feasible interval when every multiplier sits at a bound.
fn compute_bias(a: &[f64], y: &[f64], g: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for t in 0..a.len() {
        let r = -y[t] * g[t];
        if a[t] > 0.0 && a[t] < c {
            free_sum += r;
            free_count += 1;
        } else if (a[t] == 0.0) == (y[t] > 0.0) {
            lower = lower.max(r);
        } else {
            upper = upper.min(r);
        }
    }
    if free_count > 0 {
        free_sum / free_count as f64
    } else if lower.is_finite() && upper.is_finite() {
        0.5 * (lower + upper)
    } else if lower.is_finite() {
        lower
    } else if upper.is_finite() {
        upper
    } else {
        0.0
    }
}

/// Optimal dual objective for the kernel; this is the training loss.
pub fn alignment_loss(k: &DMatrix<f64>, y: &[f64], c: f64, tol: f64) -> Result<f64> {
    Ok(solve_dual(k, y, c, tol)?.dual_objective)
}

/// `Σ_i a_i y_i K(t, i) + b` for each test row `t`.
pub fn decision_scores(sol: &SvmSolution, k_test_train: &DMatrix<f64>) -> Result<Vec<f64>> {
    if k_test_train.ncols() != sol.alphas.len() {
        return Err(QkaError::DimensionMismatch {
            context: "test kernel columns",
            expected: sol.alphas.len(),
            found: k_test_train.ncols(),
        });
    }
    Ok((0..k_test_train.nrows())
        .map(|t| {
            sol.alphas
                .iter()
                .zip(&sol.labels)
                .enumerate()
                .map(|(i, (a, y))| a * y * k_test_train[(t, i)])
                .sum::<f64>()
                + sol.bias
        })
        .collect())
}

pub fn predict(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|s| if *s >= 0.0 { 1.0 } else { -1.0 }).collect()
}
