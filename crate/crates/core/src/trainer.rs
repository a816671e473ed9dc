//! Sub-sampled kernel alignment training.
//!
//! Each optimizer iteration draws `s` subsets of `k` training points, builds
//! the sub-kernels on them and averages their alignment losses. Subsets are
//! drawn without replacement until the training set is exhausted, then a new
//! epoch starts from a fresh shuffle. All objective evaluations within one
//! iteration share the same subsets, so perturbed loss pairs are compared on
//! identical data.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, Dataset};
use crate::error::{QkaError, Result};
use crate::kernel::{project_psd, query_cost, KernelMatrix, KernelMode, QuantumKernel, QueryLedger};
use crate::metrics::roc_auc;
use crate::optim::{run_optimizer, Objective, OptimizerConfig, StepReport};
use crate::seeding;
use crate::svm::{alignment_loss, decision_scores, solve_dual, SvmConfig, SvmSolution};

/// Redraws allowed for a single-class subset before a stratified fix-up.
pub const MAX_REDRAWS: usize = 10;

/// Draws size-`k` index subsets, exhausting a shuffled pool before reuse.
#[derive(Debug, Clone)]
pub struct SubsampleScheduler {
    m: usize,
    k: usize,
    pool: Vec<usize>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl SubsampleScheduler {
    pub fn new(m: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > m {
            return Err(QkaError::invalid(format!("subset size {k} must be in 1..={m}")));
        }
        Ok(Self {
            m,
            k,
            pool: Vec::new(),
            rng: seeding::stream(seed, &[0x5343_4845]),
            epoch: 0,
        })
    }

    pub fn subset_size(&self) -> usize {
        self.k
    }

    /// Epochs started so far; the first draw starts epoch 1.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn remaining_in_epoch(&self) -> usize {
        self.pool.len()
    }

    /// `k` distinct indices. If fewer than `k` remain, the leftovers are
    /// topped up from a reshuffle of the other indices, which then forms the
    /// new epoch's pool.
    pub fn next_subset(&mut self) -> Vec<usize> {
        if self.pool.len() >= self.k {
            return self.pool.drain(..self.k).collect();
        }
        let mut draw: Vec<usize> = std::mem::take(&mut self.pool);
        let mut fresh: Vec<usize> = (0..self.m).filter(|i| !draw.contains(i)).collect();
        fresh.shuffle(&mut self.rng);
        let need = self.k - draw.len();
        draw.extend(fresh.drain(..need));
        self.pool = fresh;
        self.epoch += 1;
        draw
    }

    fn put_back(&mut self, indices: &[usize]) {
        self.pool.extend_from_slice(indices);
        self.pool.shuffle(&mut self.rng);
    }

    /// Like [`next_subset`](Self::next_subset) but guarantees both labels are
    /// present: single-class draws go back to the pool and are redrawn up to
    /// [`MAX_REDRAWS`] times, after which one member is swapped for a point
    /// of the missing class.
    pub fn next_subset_with_both_classes(&mut self, labels: &[f64]) -> Result<Vec<usize>> {
        if labels.len() != self.m {
            return Err(QkaError::DimensionMismatch {
                context: "scheduler labels",
                expected: self.m,
                found: labels.len(),
            });
        }
        let has_both = |d: &[usize]| d.iter().any(|&i| labels[i] > 0.0) && d.iter().any(|&i| labels[i] < 0.0);
        let mut draw = self.next_subset();
        for _ in 0..MAX_REDRAWS {
            if has_both(&draw) || self.k < 2 {
                break;
            }
            self.put_back(&draw);
            draw = self.next_subset();
        }
        if has_both(&draw) || self.k < 2 {
            return Ok(draw);
        }
        let missing = if labels[draw[0]] > 0.0 { -1.0 } else { 1.0 };
        let replacement = self
            .pool
            .iter()
            .position(|&i| labels[i] == missing)
            .map(|p| self.pool.remove(p))
            .or_else(|| (0..self.m).find(|&i| labels[i] == missing && !draw.contains(&i)))
            .ok_or(QkaError::SingleClass)?;
        let evicted = draw.pop().expect("k >= 2");
        self.pool.push(evicted);
        draw.push(replacement);
        Ok(draw)
    }
}

/// Kernel values handed to the SVM: shot-noise estimates are projected onto
/// the PSD cone when needed.
pub fn kernel_for_svm(k: &KernelMatrix, mode: KernelMode) -> DMatrix<f64> {
    match mode {
        KernelMode::Exact => k.values.clone(),
        // shot noise can push eigenvalues below zero
        KernelMode::Shots { .. } if k.min_eigenvalue() < 0.0 => project_psd(&k.values),
        KernelMode::Shots { .. } => k.values.clone(),
    }
}

/// Alignment loss of each subset's sub-kernel at `theta`.
pub fn subset_losses(
    theta: &[f64],
    data: &Dataset,
    subsets: &[Vec<usize>],
    kernel: &QuantumKernel,
    svm: &SvmConfig,
    ledger: &QueryLedger,
    nonce: u64,
) -> Result<Vec<f64>> {
    subsets
        .par_iter()
        .enumerate()
        .map(|(i, subset)| {
            let km = kernel.build(
                &data.features,
                subset,
                theta,
                ledger,
                "train",
                seeding::derive_seed(nonce, &[i as u64]),
            )?;
            let y: Vec<f64> = subset.iter().map(|&j| data.labels[j]).collect();
            alignment_loss(&kernel_for_svm(&km, kernel.mode), &y, svm.c, svm.tol)
        })
        .collect()
}

fn draw_subsets(sched: &mut SubsampleScheduler, labels: &[f64], s: usize) -> Result<Vec<Vec<usize>>> {
    (0..s)
        .map(|_| {
            let mut d = sched.next_subset_with_both_classes(labels)?;
            d.sort_unstable();
            Ok(d)
        })
        .collect()
}

/// Draws `s` subsets and returns the mean loss with the per-subset losses.
#[allow(clippy::too_many_arguments)]
pub fn subsampled_loss(
    theta: &[f64],
    data: &Dataset,
    s: usize,
    sched: &mut SubsampleScheduler,
    kernel: &QuantumKernel,
    svm: &SvmConfig,
    ledger: &QueryLedger,
    nonce: u64,
) -> Result<(f64, Vec<f64>)> {
    if s == 0 {
        return Err(QkaError::invalid("number of sub-samples must be >= 1"));
    }
    let subsets = draw_subsets(sched, &data.labels, s)?;
    let losses = subset_losses(theta, data, &subsets, kernel, svm, ledger, nonce)?;
    Ok((mean(&losses), losses))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub kernel: QuantumKernel,
    pub optimizer: OptimizerConfig,
    pub svm: SvmConfig,
    pub k: usize,
    pub s: usize,
    pub scheduler_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub loss: f64,
    /// Per-subset losses, averaged over the iteration's evaluations.
    pub subsample_losses: Vec<f64>,
    pub subsets: Vec<Vec<usize>>,
    pub loss_evals: usize,
    pub cumulative_queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub theta_init: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub theta_opt: Vec<f64>,
    /// Iteration holding the lowest averaged loss.
    pub stopping_iteration: usize,
    pub best_loss: f64,
    /// Queries spent on all iterations that ran.
    pub training_queries: u64,
    /// Queries spent up to and including the stopping iteration.
    pub queries_at_stop: u64,
}

impl TrainRecord {
    pub fn losses(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.loss).collect()
    }
}

struct SubsampledObjective<'a> {
    data: &'a Dataset,
    kernel: &'a QuantumKernel,
    svm: SvmConfig,
    s: usize,
    scheduler: SubsampleScheduler,
    ledger: &'a QueryLedger,
    nonce_base: u64,
    evaluations: u64,
    subsets: Vec<Vec<usize>>,
    loss_sums: Vec<f64>,
    evals_this_iter: usize,
    per_iteration: Vec<(Vec<Vec<usize>>, Vec<f64>)>,
}

impl SubsampledObjective<'_> {
    fn close_iteration(&mut self) {
        if self.evals_this_iter == 0 {
            return;
        }
        let n = self.evals_this_iter as f64;
        let means = self.loss_sums.iter().map(|l| l / n).collect();
        self.per_iteration.push((std::mem::take(&mut self.subsets), means));
        self.evals_this_iter = 0;
    }
}

impl Objective for SubsampledObjective<'_> {
    fn begin_iteration(&mut self, _iteration: usize) -> Result<()> {
        self.close_iteration();
        self.subsets = draw_subsets(&mut self.scheduler, &self.data.labels, self.s)?;
        self.loss_sums = vec![0.0; self.s];
        Ok(())
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        let nonce = seeding::derive_seed(self.nonce_base, &[self.evaluations]);
        self.evaluations += 1;
        let losses = subset_losses(
            theta,
            self.data,
            &self.subsets,
            self.kernel,
            &self.svm,
            self.ledger,
            nonce,
        )?;
        for (acc, l) in self.loss_sums.iter_mut().zip(&losses) {
            *acc += l;
        }
        self.evals_this_iter += 1;
        Ok(mean(&losses))
    }
}

fn validate_setup(data: &Dataset, setup: &TrainSetup, theta_init: &[f64]) -> Result<()> {
    setup.kernel.validate()?;
    setup.optimizer.validate()?;
    let m = data.len();
    if setup.k < 2 || setup.k > m {
        return Err(QkaError::invalid(format!(
            "subset size k={} must be in 2..={m}",
            setup.k
        )));
    }
    if setup.s == 0 {
        return Err(QkaError::invalid("number of sub-samples must be >= 1"));
    }
    if data.dim() != setup.kernel.feature_map.n_qubits {
        return Err(QkaError::DimensionMismatch {
            context: "data dimension vs qubits",
            expected: setup.kernel.feature_map.n_qubits,
            found: data.dim(),
        });
    }
    if theta_init.len() != setup.kernel.n_params() {
        return Err(QkaError::DimensionMismatch {
            context: "initial parameters",
            expected: setup.kernel.n_params(),
            found: theta_init.len(),
        });
    }
    Ok(())
}

/// Runs the optimizer over the sub-sampled loss and records every iteration.
pub fn train(data: &Dataset, setup: &TrainSetup, theta_init: &[f64], ledger: &QueryLedger) -> Result<TrainRecord> {
    validate_setup(data, setup, theta_init)?;
    let start = ledger.total();
    let mut objective = SubsampledObjective {
        data,
        kernel: &setup.kernel,
        svm: setup.svm,
        s: setup.s,
        scheduler: SubsampleScheduler::new(data.len(), setup.k, setup.scheduler_seed)?,
        ledger,
        nonce_base: seeding::derive_seed(setup.scheduler_seed, &[0x4e4f_4e43]),
        evaluations: 0,
        subsets: Vec::new(),
        loss_sums: Vec::new(),
        evals_this_iter: 0,
        per_iteration: Vec::new(),
    };
    let trajectory = run_optimizer(theta_init, &mut objective, &setup.optimizer)?;
    objective.close_iteration();

    let per_eval = setup.s as u64 * query_cost(setup.k, ledger.convention());
    let mut cumulative = 0u64;
    let iterations: Vec<IterationRecord> = trajectory
        .steps
        .iter()
        .zip(objective.per_iteration)
        .enumerate()
        .map(|(i, (step, (subsets, subsample_losses))): (usize, (&StepReport, _))| {
            cumulative += step.loss_evals_used as u64 * per_eval;
            IterationRecord {
                iteration: i,
                theta: step.theta.clone(),
                loss: step.loss_value,
                subsample_losses,
                subsets,
                loss_evals: step.loss_evals_used,
                cumulative_queries: cumulative,
            }
        })
        .collect();
    let training_queries = ledger.total() - start;
    debug_assert_eq!(training_queries, cumulative);
    Ok(TrainRecord {
        m: data.len(),
        k: setup.k,
        s: setup.s,
        theta_init: theta_init.to_vec(),
        theta_opt: trajectory.best_theta,
        stopping_iteration: trajectory.best_step,
        best_loss: trajectory.best_loss,
        queries_at_stop: iterations[trajectory.best_step].cumulative_queries,
        training_queries,
        iterations,
    })
}

/// Full-kernel training: every iteration uses all `m` points.
pub fn train_full(data: &Dataset, setup: &TrainSetup, theta_init: &[f64], ledger: &QueryLedger) -> Result<TrainRecord> {
    let full = TrainSetup {
        k: data.len(),
        s: 1,
        ..setup.clone()
    };
    train(data, &full, theta_init, ledger)
}

#[derive(Debug, Clone)]
pub struct FinalModel {
    pub kernel: KernelMatrix,
    pub solution: SvmSolution,
    pub c: f64,
    pub validation_auc: Option<f64>,
}

/// Picks `C` from `grid` by validation ROC AUC on a stratified hold-out of the
/// training kernel; the first best value wins.
pub fn select_c(
    k: &DMatrix<f64>,
    labels: &[f64],
    grid: &[f64],
    validation_fraction: f64,
    tol: f64,
    seed: u64,
) -> Result<(f64, Option<f64>)> {
    match grid {
        [] => Err(QkaError::invalid("C grid is empty")),
        [c] => Ok((*c, None)),
        _ => {
            let (fit, val) = stratified_split(labels, validation_fraction, seed)?;
            let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| k[(r[i], c[j])]);
            let y_fit: Vec<f64> = fit.iter().map(|&i| labels[i]).collect();
            let y_val: Vec<f64> = val.iter().map(|&i| labels[i]).collect();
            let k_fit = sub(&fit, &fit);
            let k_val = sub(&val, &fit);
            let mut best: Option<(f64, f64)> = None;
            for &c in grid {
                let sol = solve_dual(&k_fit, &y_fit, c, tol)?;
                let auc = roc_auc(&decision_scores(&sol, &k_val)?, &y_val)?;
                if best.is_none_or(|(_, b)| auc > b) {
                    best = Some((c, auc));
                }
            }
            let (c, auc) = best.expect("non-empty grid");
            Ok((c, Some(auc)))
        }
    }
}

/// Builds the full kernel at `theta_opt` and fits the classifier on it.
pub fn finalize(
    theta_opt: &[f64],
    data: &Dataset,
    kernel: &QuantumKernel,
    svm: &SvmConfig,
    c_grid: &[f64],
    ledger: &QueryLedger,
    seed: u64,
) -> Result<FinalModel> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let km = kernel.build(&data.features, &indices, theta_opt, ledger, "finalize", seed)?;
    let values = kernel_for_svm(&km, kernel.mode);
    let grid = if c_grid.is_empty() {
        vec![svm.c]
    } else {
        c_grid.to_vec()
    };
    let (c, validation_auc) = select_c(&values, &data.labels, &grid, 0.2, svm.tol, seed)?;
    let solution = solve_dual(&values, &data.labels, c, svm.tol)?;
    Ok(FinalModel {
        kernel: km,
        solution,
        c,
        validation_auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{initial_theta, AnsatzKind, AnsatzSpec, FeatureMapSpec};
    use crate::kernel::QueryConvention;
    use std::collections::HashSet;

    #[test]
    fn two_draws_partition_four() {
        let mut s = SubsampleScheduler::new(4, 2, 9).unwrap();
        let a = s.next_subset();
        let b = s.next_subset();
        let all: HashSet<usize> = a.iter().chain(&b).copied().collect();
        assert_eq!(all, (0..4).collect());
    }

    #[test]
    fn three_draws_per_epoch_of_96() {
        let mut s = SubsampleScheduler::new(96, 32, 1).unwrap();
        let mut seen = HashSet::new();
        for _ in 0..3 {
            for i in s.next_subset() {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 96);
        assert_eq!(s.epoch(), 1);
        s.next_subset();
        assert_eq!(s.epoch(), 2);
    }

    #[test]
    fn remainder_topped_up_from_reshuffle() {
        let mut s = SubsampleScheduler::new(7, 5, 4).unwrap();
        let first = s.next_subset();
        let leftovers: Vec<usize> = (0..7).filter(|i| !first.contains(i)).collect();
        assert_eq!(s.remaining_in_epoch(), 2);
        let second = s.next_subset();
        assert_eq!(second.len(), 5);
        let mut head = second[..2].to_vec();
        head.sort_unstable();
        assert_eq!(head, leftovers);
        let distinct: HashSet<usize> = second.iter().copied().collect();
        assert_eq!(distinct.len(), 5);
        // the new epoch holds the two indices not yet served in it
        assert_eq!(s.remaining_in_epoch(), 2);
        let third = s.next_subset();
        assert_eq!(third.iter().collect::<HashSet<_>>().len(), 5);
    }

    #[test]
    fn oversized_subset_rejected() {
        assert!(SubsampleScheduler::new(3, 4, 0).is_err());
        assert!(SubsampleScheduler::new(3, 0, 0).is_err());
    }

    #[test]
    fn single_class_draws_are_repaired() {
        // one negative among many positives: most size-2 draws are single-class
        let mut labels = vec![1.0; 20];
        labels[13] = -1.0;
        let mut s = SubsampleScheduler::new(20, 2, 3).unwrap();
        for _ in 0..30 {
            let d = s.next_subset_with_both_classes(&labels).unwrap();
            assert_eq!(d.len(), 2);
            assert_ne!(d[0], d[1]);
            assert!(d.contains(&13));
        }
    }

    fn toy_dataset() -> Dataset {
        let features: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![0.4 * i as f64, 1.0 + 0.3 * (i % 5) as f64])
            .collect();
        let labels = (0..12).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        Dataset::new("toy", features, labels).unwrap()
    }

    fn setup(k: usize, s: usize) -> TrainSetup {
        TrainSetup {
            kernel: QuantumKernel::new(FeatureMapSpec::zz(2), AnsatzSpec::new(AnsatzKind::He, 2)),
            optimizer: OptimizerConfig::spsa().with_max_iterations(3).with_seed(2),
            svm: SvmConfig::default(),
            k,
            s,
            scheduler_seed: 8,
        }
    }

    #[test]
    fn full_subsample_equals_full_loss() {
        let data = toy_dataset();
        let st = setup(12, 1);
        let theta = initial_theta(8, 0);
        let ledger = QueryLedger::new(QueryConvention::Pairs);
        let mut sched = SubsampleScheduler::new(12, 12, 5).unwrap();
        let (l, _) = subsampled_loss(&theta, &data, 1, &mut sched, &st.kernel, &st.svm, &ledger, 0).unwrap();
        let full = crate::kernel::build_kernel(&data.features, &theta, &st.kernel, &ledger).unwrap();
        let direct = alignment_loss(&full.values, &data.labels, 1.0, st.svm.tol).unwrap();
        assert_eq!(l, direct);
        assert_eq!(ledger.total(), 2 * 66);
    }

    #[test]
    fn record_accounting_matches_ledger() {
        let data = toy_dataset();
        let st = setup(4, 3);
        let ledger = QueryLedger::new(QueryConvention::Squared);
        let rec = train(&data, &st, &initial_theta(8, 0), &ledger).unwrap();
        assert_eq!(rec.iterations.len(), 3);
        assert_eq!(ledger.total(), 3 * 2 * 3 * 16);
        assert_eq!(rec.training_queries, ledger.total());
        let cum: Vec<u64> = rec.iterations.iter().map(|i| i.cumulative_queries).collect();
        assert_eq!(cum, vec![96, 192, 288]);
        for it in &rec.iterations {
            assert_eq!(it.subsample_losses.len(), 3);
            assert!((it.loss - mean(&it.subsample_losses)).abs() < 1e-12);
            assert!(it.subsets.iter().all(|s| s.len() == 4));
        }
        let best = rec.iterations.iter().map(|i| i.loss).fold(f64::INFINITY, f64::min);
        assert_eq!(rec.best_loss, best);
        assert_eq!(rec.theta_opt, rec.iterations[rec.stopping_iteration].theta);
    }

    #[test]
    fn k_equal_m_matches_full_loop() {
        let data = toy_dataset();
        let st = setup(12, 1);
        let theta = initial_theta(8, 4);
        let a = train(&data, &st, &theta, &QueryLedger::new(QueryConvention::Pairs)).unwrap();
        let b = train_full(&data, &setup(5, 3), &theta, &QueryLedger::new(QueryConvention::Pairs)).unwrap();
        assert_eq!(a.losses(), b.losses());
        assert_eq!(a.theta_opt, b.theta_opt);
    }

    #[test]
    fn finalize_with_no_training_uses_initial_kernel() {
        let data = toy_dataset();
        let st = setup(4, 1);
        let theta = initial_theta(8, 0);
        let ledger = QueryLedger::new(QueryConvention::Pairs);
        let model = finalize(&theta, &data, &st.kernel, &st.svm, &[1.0], &ledger, 0).unwrap();
        assert_eq!(ledger.total(), 66);
        let direct = crate::kernel::build_kernel(
            &data.features,
            &theta,
            &st.kernel,
            &QueryLedger::new(QueryConvention::Pairs),
        )
        .unwrap();
        assert_eq!(model.kernel.values, direct.values);
        for i in 0..12 {
            assert_eq!(model.kernel.values[(i, i)], 1.0);
        }
    }

    #[test]
    fn invalid_setups_rejected() {
        let data = toy_dataset();
        let ledger = QueryLedger::new(QueryConvention::Pairs);
        let theta = initial_theta(8, 0);
        assert!(train(&data, &setup(13, 1), &theta, &ledger).is_err());
        assert!(train(&data, &setup(1, 1), &theta, &ledger).is_err());
        assert!(train(&data, &setup(4, 0), &theta, &ledger).is_err());
        assert!(train(&data, &setup(4, 1), &theta[..7], &ledger).is_err());
        assert_eq!(ledger.total(), 0);
    }
}
