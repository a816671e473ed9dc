//! Quantum kernel alignment with sub-sampled training.
//!
//! A fidelity kernel `k(x, x') = |⟨ψ(x)|ψ(x')⟩|²` is built from states
//! `U_φ(x) U(θ) |0⟩`, and the ansatz parameters `θ` are tuned to minimise the
//! SVM dual objective. Each training step uses the mean loss over a few
//! random size-`k` subsets instead of the full training kernel.

pub mod circuits;
pub mod data;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod metrics;
pub mod optim;
pub mod seeding;
pub mod statevector;
pub mod svm;
pub mod trainer;

pub use circuits::{AnsatzKind, AnsatzSpec, Entanglement, FeatureMapKind, FeatureMapSpec};
pub use data::{Dataset, HavlicekParams};
pub use error::{QkaError, Result};
pub use kernel::{KernelMatrix, KernelMode, QuantumKernel, QueryConvention, QueryLedger};
pub use optim::{Objective, OptimizerConfig, OptimizerKind};
pub use statevector::{Gate, Statevector};
pub use svm::{SvmConfig, SvmSolution};
pub use trainer::{FinalModel, SubsampleScheduler, TrainRecord, TrainSetup};
