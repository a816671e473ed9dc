//! SPSA, ADAM and gradient descent over a scalar objective.
//!
//! Every step reports how many objective evaluations it used so the caller can
//! convert them into circuit queries. The loss attached to a step is estimated
//! from those same evaluations (mean of the perturbed values) and is
//! attributed to the point the step started from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, QkaError, Result};
use crate::seeding;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Scalar objective driven by an optimizer.
pub trait Objective {
    fn evaluate(&mut self, theta: &[f64]) -> Result<f64>;

    /// Called once before each optimizer step.
    fn begin_iteration(&mut self, _iteration: usize) -> Result<()> {
        Ok(())
    }
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        self(theta)
    }
}

/// Adapter for infallible closures.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: FnMut(&[f64]) -> f64,
{
    fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        Ok((self.0)(theta))
    }
}

pub fn from_fn<F: FnMut(&[f64]) -> f64>(f: F) -> FnObjective<F> {
    FnObjective(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Spsa,
    Adam,
    Gd,
}

impl OptimizerKind {
    pub fn label(self) -> &'static str {
        match self {
            OptimizerKind::Spsa => "SPSA",
            OptimizerKind::Adam => "ADAM",
            OptimizerKind::Gd => "GD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub max_iterations: usize,
    pub learning_rate: f64,
    /// SPSA perturbation size.
    pub perturbation: f64,
    /// Step-norm threshold for ADAM/GD early stopping; SPSA ignores it.
    pub tolerance: f64,
    /// Central-difference step for ADAM/GD.
    pub fd_step: f64,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn spsa() -> Self {
        Self {
            kind: OptimizerKind::Spsa,
            max_iterations: 200,
            learning_rate: 0.01,
            perturbation: 0.05,
            tolerance: 0.0,
            fd_step: 0.01,
            seed: 0,
        }
    }

    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            tolerance: 1e-6,
            ..Self::spsa()
        }
    }

    pub fn gd() -> Self {
        Self {
            kind: OptimizerKind::Gd,
            tolerance: 1e-7,
            ..Self::spsa()
        }
    }

    pub fn for_kind(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Spsa => Self::spsa(),
            OptimizerKind::Adam => Self::adam(),
            OptimizerKind::Gd => Self::gd(),
        }
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(QkaError::invalid("max_iterations must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(QkaError::invalid("learning_rate must be > 0"));
        }
        match self.kind {
            OptimizerKind::Spsa => {
                if !(self.perturbation.is_finite() && self.perturbation > 0.0) {
                    return Err(QkaError::invalid("SPSA perturbation must be > 0"));
                }
            }
            OptimizerKind::Adam | OptimizerKind::Gd => {
                if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
                    return Err(QkaError::invalid("finite-difference step must be > 0"));
                }
                if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
                    return Err(QkaError::invalid("tolerance must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Objective evaluations consumed by one step on `dim` parameters.
    pub fn evals_per_step(&self, dim: usize) -> usize {
        match self.kind {
            OptimizerKind::Spsa => 2,
            OptimizerKind::Adam | OptimizerKind::Gd => 2 * dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Point the loss estimate belongs to.
    pub theta: Vec<f64>,
    pub theta_after: Vec<f64>,
    pub loss_evals_used: usize,
    pub loss_value: f64,
}

fn checked(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QkaError::NonFinite("loss"))
    }
}

/// Rademacher direction for step `iter_index`.
pub fn spsa_direction(dim: usize, seed: u64, iter_index: usize) -> Vec<f64> {
    let mut rng = seeding::stream(seed, &[0x5350_5341, iter_index as u64]);
    (0..dim)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

pub fn spsa_step_with_direction(
    theta: &[f64],
    objective: &mut dyn Objective,
    cfg: &OptimizerConfig,
    delta: &[f64],
) -> Result<StepReport> {
    if !(cfg.perturbation.is_finite() && cfg.perturbation > 0.0) {
        return Err(QkaError::invalid("SPSA perturbation must be > 0"));
    }
    let c = cfg.perturbation;
    let plus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + c * d).collect();
    let minus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t - c * d).collect();
    let f_plus = checked(objective.evaluate(&plus)?)?;
    let f_minus = checked(objective.evaluate(&minus)?)?;
    let scale = (f_plus - f_minus) / (2.0 * c);
    let theta_after = theta
        .iter()
        .zip(delta)
        .map(|(t, d)| t - cfg.learning_rate * scale / d)
        .collect();
    Ok(StepReport {
        theta: theta.to_vec(),
        theta_after,
        loss_evals_used: 2,
        loss_value: 0.5 * (f_plus + f_minus),
    })
}

pub fn spsa_step(
    theta: &[f64],
    objective: &mut dyn Objective,
    cfg: &OptimizerConfig,
    iter_index: usize,
) -> Result<StepReport> {
    let delta = spsa_direction(theta.len(), cfg.seed, iter_index);
    spsa_step_with_direction(theta, objective, cfg, &delta)
}

/// Central differences; returns the gradient and the mean of all evaluations.
pub fn finite_diff_grad_with_loss(
    theta: &[f64],
    objective: &mut dyn Objective,
    step_size: f64,
) -> Result<(Vec<f64>, f64)> {
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(QkaError::invalid("finite-difference step must be > 0"));
    }
    let mut grad = Vec::with_capacity(theta.len());
    let mut total = 0.0;
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + step_size;
        let up = checked(objective.evaluate(&probe)?)?;
        probe[i] = theta[i] - step_size;
        let down = checked(objective.evaluate(&probe)?)?;
        probe[i] = theta[i];
        grad.push((up - down) / (2.0 * step_size));
        total += up + down;
    }
    let mean = if theta.is_empty() {
        f64::NAN
    } else {
        total / (2 * theta.len()) as f64
    };
    Ok((grad, mean))
}

pub fn finite_diff_grad(theta: &[f64], objective: &mut dyn Objective, step_size: f64) -> Result<Vec<f64>> {
    Ok(finite_diff_grad_with_loss(theta, objective, step_size)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// Bias-corrected ADAM update; returns the new parameters.
pub fn adam_step(theta: &[f64], grad: &[f64], state: &mut AdamState, cfg: &OptimizerConfig) -> Result<Vec<f64>> {
    ensure_finite(grad, "gradient")?;
    if grad.len() != theta.len() || state.m.len() != theta.len() {
        return Err(QkaError::DimensionMismatch {
            context: "ADAM state",
            expected: theta.len(),
            found: grad.len(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    Ok(theta
        .iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (th, g))| {
            state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
            state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            th - cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepReport>,
    pub best_step: usize,
    pub best_theta: Vec<f64>,
    pub best_loss: f64,
    pub total_loss_evals: usize,
}

fn step_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Runs up to `max_iterations` steps and keeps the lowest-loss point seen.
pub fn run_optimizer(theta0: &[f64], objective: &mut dyn Objective, cfg: &OptimizerConfig) -> Result<Trajectory> {
    cfg.validate()?;
    ensure_finite(theta0, "initial parameters")?;
    let mut theta = theta0.to_vec();
    let mut adam = AdamState::new(theta.len());
    let mut steps: Vec<StepReport> = Vec::with_capacity(cfg.max_iterations);
    for iter in 0..cfg.max_iterations {
        objective.begin_iteration(iter)?;
        let report = match cfg.kind {
            OptimizerKind::Spsa => spsa_step(&theta, objective, cfg, iter)?,
            OptimizerKind::Adam | OptimizerKind::Gd => {
                let (grad, loss) = finite_diff_grad_with_loss(&theta, objective, cfg.fd_step)?;
                let theta_after = if cfg.kind == OptimizerKind::Adam {
                    adam_step(&theta, &grad, &mut adam, cfg)?
                } else {
                    ensure_finite(&grad, "gradient")?;
                    theta
                        .iter()
                        .zip(&grad)
                        .map(|(t, g)| t - cfg.learning_rate * g)
                        .collect()
                };
                StepReport {
                    theta: theta.clone(),
                    theta_after,
                    loss_evals_used: 2 * theta.len(),
                    loss_value: loss,
                }
            }
        };
        let moved = step_norm(&report.theta, &report.theta_after);
        theta = report.theta_after.clone();
        steps.push(report);
        if cfg.kind != OptimizerKind::Spsa && moved < cfg.tolerance {
            break;
        }
    }
    // lowest loss wins; the earliest such step on ties
    let best_step = steps.iter().enumerate().fold(
        0,
        |best, (i, s)| {
            if s.loss_value < steps[best].loss_value {
                i
            } else {
                best
            }
        },
    );
    Ok(Trajectory {
        best_theta: steps[best_step].theta.clone(),
        best_loss: steps[best_step].loss_value,
        best_step,
        total_loss_evals: steps.iter().map(|s| s.loss_evals_used).sum(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spsa_constant_loss_does_not_move() {
        let mut f = from_fn(|_: &[f64]| 3.0);
        let cfg = OptimizerConfig::spsa();
        let r = spsa_step(&[0.5, -0.2], &mut f, &cfg, 0).unwrap();
        assert_eq!(r.theta_after, vec![0.5, -0.2]);
        assert_eq!(r.loss_evals_used, 2);
    }

    #[test]
    fn spsa_scalar_arithmetic() {
        let mut f = from_fn(|t: &[f64]| t[0] * t[0]);
        let cfg = OptimizerConfig::spsa();
        let r = spsa_step_with_direction(&[1.0], &mut f, &cfg, &[1.0]).unwrap();
        assert!((r.theta_after[0] - 0.98).abs() < 1e-12);
    }

    #[test]
    fn spsa_converges_on_shifted_square() {
        let mut f = from_fn(|t: &[f64]| (t[0] - 2.0).powi(2));
        let cfg = OptimizerConfig::spsa().with_max_iterations(400).with_seed(17);
        let traj = run_optimizer(&[0.0], &mut f, &cfg).unwrap();
        assert!((traj.steps.last().unwrap().theta_after[0] - 2.0).abs() < 0.2);
        assert_eq!(traj.total_loss_evals, 800);
    }

    #[test]
    fn spsa_rejects_bad_loss_and_perturbation() {
        let mut f = from_fn(|_: &[f64]| f64::NAN);
        assert!(matches!(
            spsa_step(&[0.0], &mut f, &OptimizerConfig::spsa(), 0),
            Err(QkaError::NonFinite(_))
        ));
        let mut g = from_fn(|_: &[f64]| 1.0);
        let mut cfg = OptimizerConfig::spsa();
        cfg.perturbation = 0.0;
        assert!(spsa_step(&[0.0], &mut g, &cfg, 0).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_theta() {
        let cfg = OptimizerConfig::adam();
        let mut state = AdamState::new(2);
        state.m = vec![0.5, -0.5];
        state.v = vec![0.1, 0.1];
        state.t = 3;
        let before = state.clone();
        let out = adam_step(&[1.0, 2.0], &[0.0, 0.0], &mut state, &cfg).unwrap();
        // moments decay; the stored first moment still pushes θ
        assert!(state.m[0].abs() < before.m[0].abs());
        assert!(state.v[0] < before.v[0]);
        let mut fresh = AdamState::new(2);
        let still = adam_step(&[1.0, 2.0], &[0.0, 0.0], &mut fresh, &cfg).unwrap();
        assert_eq!(still, vec![1.0, 2.0]);
        assert_ne!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let cfg = OptimizerConfig::adam();
        let mut state = AdamState::new(3);
        let out = adam_step(&[0.0; 3], &[4.0, -0.001, 250.0], &mut state, &cfg).unwrap();
        for (o, s) in out.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((o - s * 0.01).abs() < 1e-6, "{o}");
        }
        assert!(adam_step(&[0.0; 3], &[f64::INFINITY, 0.0, 0.0], &mut state, &cfg).is_err());
    }

    #[test]
    fn adam_converges_on_bowl() {
        let target = [1.0, -0.5];
        let mut f = from_fn(|t: &[f64]| t.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum());
        let cfg = OptimizerConfig::adam().with_max_iterations(400);
        let traj = run_optimizer(&[0.0, 0.0], &mut f, &cfg).unwrap();
        assert!(step_norm(&traj.best_theta, &target) < 0.05);
    }

    #[test]
    fn finite_differences_on_linear_and_quadratic() {
        let a = [0.5, -2.0, 3.0];
        let mut lin = from_fn(|t: &[f64]| t.iter().zip(&a).map(|(x, y)| x * y).sum());
        let g = finite_diff_grad(&[0.1, 0.2, 0.3], &mut lin, 0.01).unwrap();
        for (gi, ai) in g.iter().zip(a) {
            assert!((gi - ai).abs() < 1e-8);
        }
        let mut quad = from_fn(|t: &[f64]| t.iter().map(|x| x * x).sum());
        let g = finite_diff_grad(&[1.0, 2.0], &mut quad, 0.01).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        assert!(finite_diff_grad(&[1.0], &mut quad, 0.0).is_err());
    }

    #[test]
    fn single_iteration_records_one_step() {
        let mut f = from_fn(|t: &[f64]| t[0].powi(2));
        let traj = run_optimizer(&[1.0], &mut f, &OptimizerConfig::gd().with_max_iterations(1)).unwrap();
        assert_eq!(traj.steps.len(), 1);
        assert_eq!(traj.total_loss_evals, 2);
    }

    #[test]
    fn monotone_loss_picks_last_step() {
        let mut f = from_fn(|t: &[f64]| t[0].powi(2));
        let traj = run_optimizer(&[1.0], &mut f, &OptimizerConfig::gd().with_max_iterations(20)).unwrap();
        assert_eq!(traj.best_step, 19);
        assert_eq!(traj.best_theta, traj.steps[19].theta);
    }

    #[test]
    fn best_point_can_be_mid_run() {
        // scripted losses: a dip at step 3, noise afterwards
        let script = [5.0, 4.0, 3.0, 0.5, 2.0, 1.0, 1.5, 0.9];
        let mut calls = 0usize;
        let mut f = from_fn(|_: &[f64]| {
            let v = script[calls / 2];
            calls += 1;
            v
        });
        let cfg = OptimizerConfig::spsa().with_max_iterations(script.len());
        let traj = run_optimizer(&[0.0, 0.0], &mut f, &cfg).unwrap();
        assert_eq!(traj.best_step, 3);
        assert_eq!(traj.best_loss, 0.5);
        assert_eq!(traj.best_theta, traj.steps[3].theta);
    }

    #[test]
    fn trajectories_are_deterministic() {
        let mut f = from_fn(|t: &[f64]| t.iter().map(|x| (x - 0.3).powi(2)).sum());
        let cfg = OptimizerConfig::spsa().with_seed(5).with_max_iterations(50);
        let a = run_optimizer(&[0.0; 4], &mut f, &cfg).unwrap();
        let b = run_optimizer(&[0.0; 4], &mut f, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut f = from_fn(|_: &[f64]| 0.0);
        let mut cfg = OptimizerConfig::adam();
        cfg.max_iterations = 0;
        assert!(run_optimizer(&[0.0], &mut f, &cfg).is_err());
        cfg.max_iterations = 5;
        cfg.learning_rate = -1.0;
        assert!(run_optimizer(&[0.0], &mut f, &cfg).is_err());
    }
}
