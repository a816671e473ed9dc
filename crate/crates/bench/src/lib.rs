//! Shared fixtures for the criterion benches.

use qka::data::{generate_havlicek, HavlicekParams};
use qka::{AnsatzKind, AnsatzSpec, Dataset, FeatureMapSpec, QuantumKernel};

/// Default two-qubit synthetic training set.
pub fn synthetic_train(m: usize) -> Dataset {
    let params = HavlicekParams {
        m_train: m,
        m_test: 2,
        ..Default::default()
    };
    generate_havlicek(&params).expect("generator").0
}

pub fn he_zz_kernel(n_qubits: usize) -> QuantumKernel {
    QuantumKernel::new(FeatureMapSpec::zz(n_qubits), AnsatzSpec::new(AnsatzKind::He, n_qubits))
}

/// Deterministic points in `[0, 2π)` for wider registers.
pub fn grid_points(count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| (0..dim).map(|j| ((i * 7 + j * 3) % 17) as f64 * 0.37).collect())
        .collect()
}
