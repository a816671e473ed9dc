//! Independent reference implementations used by the integration tests.
//!
//! The dense simulator builds every operator as a full `2^n × 2^n` matrix from
//! Kronecker products (qubit 0 is the least significant factor), so it shares
//! no code with the in-place statevector kernels. The QP oracle solves the SVM
//! dual by accelerated projected gradient instead of pairwise updates.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qka::circuits::{AnsatzKind, AnsatzSpec, Entanglement, FeatureMapKind, FeatureMapSpec};

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `op` on `qubit` of an `n`-qubit register: `I ⊗ … ⊗ op ⊗ … ⊗ I`, with the
/// highest qubit leftmost.
pub fn embed(op: &CMat, qubit: usize, n: usize) -> CMat {
    let id = identity(2);
    let mut out = identity(1);
    for q in (0..n).rev() {
        out = kron(&out, if q == qubit { op } else { &id });
    }
    out
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

pub fn hadamard() -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)])
}

/// `exp(−i·angle·Y/2)`.
pub fn ry(angle: f64) -> CMat {
    let (s, co) = (angle / 2.0).sin_cos();
    CMat::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
}

/// `exp(−i·angle·Z/2)`.
pub fn rz(angle: f64) -> CMat {
    let half = angle / 2.0;
    CMat::from_row_slice(
        2,
        2,
        &[
            c(half.cos(), -half.sin()),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(half.cos(), half.sin()),
        ],
    )
}

pub fn cnot(control: usize, target: usize, n: usize) -> CMat {
    let p0 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let p1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    embed(&p0, control, n) + embed(&p1, control, n) * embed(&pauli_x(), target, n)
}

/// `exp(iH)` for a Hermitian `H` via its eigen-decomposition.
pub fn expm_i_hermitian(h: &CMat) -> CMat {
    let eig = h.clone().symmetric_eigen();
    let phases = CMat::from_diagonal(&eig.eigenvalues.map(|v| Complex64::from_polar(1.0, v)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Dense `U_φ(x)`: `reps` × (Hadamard layer, then `exp(i Σ φ_S Z_S)`).
pub fn feature_map_unitary(spec: &FeatureMapSpec, x: &[f64]) -> CMat {
    let n = spec.n_qubits;
    let dim = 1 << n;
    let bw = spec.bandwidth.unwrap_or(2.0 / n as f64);
    let pi = std::f64::consts::PI;
    let single = |i: usize| match spec.kind {
        FeatureMapKind::Zz => x[i],
        FeatureMapKind::Iqp => bw * x[i],
    };
    let pair = |i: usize, j: usize| match spec.kind {
        FeatureMapKind::Zz => (pi - x[i]) * (pi - x[j]),
        FeatureMapKind::Iqp => bw * bw * x[i] * x[j],
    };
    let mut hamiltonian = CMat::zeros(dim, dim);
    for i in 0..n {
        hamiltonian += embed(&pauli_z(), i, n) * c(single(i), 0.0);
        for j in i + 1..n {
            hamiltonian += embed(&pauli_z(), i, n) * embed(&pauli_z(), j, n) * c(pair(i, j), 0.0);
        }
    }
    let uz = expm_i_hermitian(&hamiltonian);
    let mut h_layer = identity(dim);
    for q in 0..n {
        h_layer = embed(&hadamard(), q, n) * h_layer;
    }
    let mut u = identity(dim);
    for _ in 0..spec.reps {
        u = &uz * &h_layer * u;
    }
    u
}

fn pairs(ent: Entanglement, n: usize) -> Vec<(usize, usize)> {
    match ent {
        Entanglement::Linear => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
        Entanglement::Full => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
    }
}

/// Dense `U(θ)` for the layered ansatz.
pub fn ansatz_unitary(spec: &AnsatzSpec, theta: &[f64]) -> CMat {
    let n = spec.n_qubits;
    let mut u = identity(1 << n);
    let mut next = 0usize;
    let mut rotations = |u: &mut CMat| {
        for q in 0..n {
            *u = embed(&ry(theta[next]), q, n) * &*u;
            next += 1;
        }
        if spec.kind == AnsatzKind::He {
            for q in 0..n {
                *u = embed(&rz(theta[next]), q, n) * &*u;
                next += 1;
            }
        }
    };
    for _ in 0..spec.reps {
        rotations(&mut u);
        for (ctl, tgt) in pairs(spec.entanglement, n) {
            u = cnot(ctl, tgt, n) * u;
        }
    }
    rotations(&mut u);
    u
}

pub fn zero_state(n: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(1 << n);
    v[0] = c(1.0, 0.0);
    v
}

/// `U_φ(x) U(θ) |0⟩` by dense matrix products.
pub fn dense_state(ansatz: &AnsatzSpec, fmap: &FeatureMapSpec, theta: &[f64], x: &[f64]) -> DVector<Complex64> {
    feature_map_unitary(fmap, x) * ansatz_unitary(ansatz, theta) * zero_state(ansatz.n_qubits)
}

pub fn dense_fidelity(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Dense fidelity kernel on `points`.
pub fn dense_kernel(ansatz: &AnsatzSpec, fmap: &FeatureMapSpec, theta: &[f64], points: &[Vec<f64>]) -> DMatrix<f64> {
    let states: Vec<_> = points.iter().map(|x| dense_state(ansatz, fmap, theta, x)).collect();
    DMatrix::from_fn(points.len(), points.len(), |i, j| {
        dense_fidelity(&states[i], &states[j])
    })
}

/// Projection onto `{a : 0 ≤ a ≤ C, yᵀa = 0}` by bisection on the multiplier.
pub fn project_box_hyperplane(v: &[f64], y: &[f64], c_box: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c_box))
            .collect()
    };
    let residual = |lambda: f64| -> f64 { at(lambda).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c_box + 1.0;
    let (mut lo, mut hi) = (-span, span);
    // residual is non-increasing in lambda
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// `Σα − ½ Σ α_i α_j y_i y_j K_ij`.
pub fn dual_value(k: &DMatrix<f64>, y: &[f64], a: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * k[(i, j)];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Maximises the SVM dual with FISTA plus gradient-based restarts.
pub fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c_box: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let lipschitz = q
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let step = 1.0 / lipschitz;
    let grad = |a: &[f64]| -> Vec<f64> {
        let qa = &q * DVector::from_column_slice(a);
        (0..n).map(|i| 1.0 - qa[i]).collect()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let g = grad(&z);
        let ascent: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect();
        let x_next = project_box_hyperplane(&ascent, y, c_box);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // restart momentum when the projected step opposes the last move
        let against: f64 = (0..n).map(|i| (x_next[i] - z[i]) * (x_next[i] - x[i])).sum();
        if against < 0.0 {
            t = 1.0;
            z = x_next.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            z = x_next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            t = t_next;
        }
        x = x_next;
    }
    let value = dual_value(k, y, &x);
    (x, value)
}
