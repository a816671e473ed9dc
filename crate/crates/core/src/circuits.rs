//! Feature maps `U_φ(x)`, trainable ansatze `U(θ)`, and the state
//! preparation `|ψ(θ, x)⟩ = U_φ(x) U(θ) |0…0⟩`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, QkaError, Result};
use crate::statevector::{z_diagonal, Gate, Statevector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMapKind {
    /// Second-order Pauli-Z evolution with `φ_i = x_i`, `φ_ij = (π − x_i)(π − x_j)`.
    Zz,
    /// Bandwidth-scaled IQP map with `φ_i = c·x_i`, `φ_ij = c²·x_i·x_j`.
    Iqp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub kind: FeatureMapKind,
    pub n_qubits: usize,
    #[serde(default = "default_fmap_reps")]
    pub reps: usize,
    /// IQP bandwidth; `None` means `2 / n_qubits`.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

fn default_fmap_reps() -> usize {
    2
}

impl FeatureMapSpec {
    pub fn zz(n_qubits: usize) -> Self {
        Self {
            kind: FeatureMapKind::Zz,
            n_qubits,
            reps: 2,
            bandwidth: None,
        }
    }

    pub fn iqp(n_qubits: usize) -> Self {
        Self {
            kind: FeatureMapKind::Iqp,
            n_qubits,
            reps: 2,
            bandwidth: None,
        }
    }

    pub fn with_bandwidth(mut self, c: f64) -> Self {
        self.bandwidth = Some(c);
        self
    }

    pub fn effective_bandwidth(&self) -> f64 {
        self.bandwidth.unwrap_or(2.0 / self.n_qubits as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.reps == 0 {
            return Err(QkaError::invalid("feature map needs n_qubits >= 1 and reps >= 1"));
        }
        if self.kind == FeatureMapKind::Iqp {
            let c = self.effective_bandwidth();
            if !(c.is_finite() && c > 0.0) {
                return Err(QkaError::invalid(format!("IQP bandwidth must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    /// Phase diagonal of `U_Z(x) = exp(i[Σ φ_i Z_i + Σ_{i<j} φ_ij Z_i Z_j])`.
    pub fn phase_diagonal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.n_qubits;
        if x.len() != n {
            return Err(QkaError::DimensionMismatch {
                context: "feature map input",
                expected: n,
                found: x.len(),
            });
        }
        ensure_finite(x, "feature vector")?;
        let c = self.effective_bandwidth();
        let single = |i: usize| match self.kind {
            FeatureMapKind::Zz => x[i],
            FeatureMapKind::Iqp => c * x[i],
        };
        let pair = |i: usize, j: usize| match self.kind {
            FeatureMapKind::Zz => (PI - x[i]) * (PI - x[j]),
            FeatureMapKind::Iqp => c * c * x[i] * x[j],
        };
        let mut phases = vec![0.0; 1 << n];
        for (b, phase) in phases.iter_mut().enumerate() {
            let z = |q: usize| if b >> q & 1 == 0 { 1.0 } else { -1.0 };
            let mut acc = 0.0;
            for i in 0..n {
                acc += single(i) * z(i);
                for j in i + 1..n {
                    acc += pair(i, j) * z(i) * z(j);
                }
            }
            *phase = acc;
        }
        Ok(phases)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    /// Real Amplitudes: RY rotation layers.
    #[serde(alias = "realamplitudes")]
    Ra,
    /// Hardware-efficient SU(2): RY then RZ per qubit per rotation layer.
    #[serde(alias = "efficientsu2")]
    He,
}

impl AnsatzKind {
    pub fn label(self) -> &'static str {
        match self {
            AnsatzKind::Ra => "RA",
            AnsatzKind::He => "HE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entanglement {
    #[default]
    Linear,
    Full,
}

impl Entanglement {
    fn pairs(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            Entanglement::Linear => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            Entanglement::Full => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub kind: AnsatzKind,
    pub n_qubits: usize,
    #[serde(default = "default_ansatz_reps")]
    pub reps: usize,
    #[serde(default)]
    pub entanglement: Entanglement,
}

fn default_ansatz_reps() -> usize {
    1
}

impl AnsatzSpec {
    pub fn new(kind: AnsatzKind, n_qubits: usize) -> Self {
        Self {
            kind,
            n_qubits,
            reps: 1,
            entanglement: Entanglement::Linear,
        }
    }

    pub fn parameter_count(&self) -> usize {
        let per_layer = match self.kind {
            AnsatzKind::Ra => self.n_qubits,
            AnsatzKind::He => 2 * self.n_qubits,
        };
        per_layer * (self.reps + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.reps == 0 {
            return Err(QkaError::invalid("ansatz needs n_qubits >= 1 and reps >= 1"));
        }
        Ok(())
    }
}

/// Rotation angle: either fixed or a reference into the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Fixed(f64),
    Param(usize),
}

impl Angle {
    fn resolve(self, params: &[f64]) -> f64 {
        match self {
            Angle::Fixed(v) => v,
            Angle::Param(i) => params[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    H(usize),
    X(usize),
    Ry(usize, Angle),
    Rz(usize, Angle),
    Cx(usize, usize),
    PhaseDiag(Vec<f64>),
}

/// Gate template with named parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    pub n_qubits: usize,
    pub ops: Vec<Op>,
    pub param_names: Vec<String>,
}

impl ParamCircuit {
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn bind(&self, params: &[f64]) -> Result<Circuit> {
        if params.len() != self.n_params() {
            return Err(QkaError::DimensionMismatch {
                context: "circuit parameters",
                expected: self.n_params(),
                found: params.len(),
            });
        }
        ensure_finite(params, "circuit parameters")?;
        let gates = self
            .ops
            .iter()
            .map(|op| match op {
                Op::H(q) => Gate::H(*q),
                Op::X(q) => Gate::X(*q),
                Op::Ry(q, a) => Gate::Ry {
                    qubit: *q,
                    angle: a.resolve(params),
                },
                Op::Rz(q, a) => Gate::Rz {
                    qubit: *q,
                    angle: a.resolve(params),
                },
                Op::Cx(c, t) => Gate::Cx {
                    control: *c,
                    target: *t,
                },
                Op::PhaseDiag(p) => Gate::PhaseDiag(p.clone()),
            })
            .collect();
        Ok(Circuit {
            n_qubits: self.n_qubits,
            gates,
        })
    }
}

/// Concrete gate sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn apply_to(&self, state: &mut Statevector) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return Err(QkaError::DimensionMismatch {
                context: "circuit width",
                expected: self.n_qubits,
                found: state.n_qubits(),
            });
        }
        self.gates.iter().try_for_each(|g| state.apply(g))
    }

    pub fn run_from_zero(&self) -> Result<Statevector> {
        let mut s = Statevector::zero(self.n_qubits)?;
        self.apply_to(&mut s)?;
        Ok(s)
    }

    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    pub fn then(mut self, other: Circuit) -> Circuit {
        self.gates.extend(other.gates);
        self
    }
}

fn feature_map_circuit(spec: &FeatureMapSpec, x: &[f64]) -> Result<Circuit> {
    let phases = spec.phase_diagonal(x)?;
    let mut gates = Vec::with_capacity(spec.reps * (spec.n_qubits + 1));
    for _ in 0..spec.reps {
        gates.extend((0..spec.n_qubits).map(Gate::H));
        gates.push(Gate::PhaseDiag(phases.clone()));
    }
    Ok(Circuit {
        n_qubits: spec.n_qubits,
        gates,
    })
}

pub fn build_zz_feature_map(spec: &FeatureMapSpec, x: &[f64]) -> Result<Circuit> {
    if spec.kind != FeatureMapKind::Zz {
        return Err(QkaError::invalid("expected a ZZ feature map spec"));
    }
    feature_map_circuit(spec, x)
}

pub fn build_iqp_feature_map(spec: &FeatureMapSpec, x: &[f64]) -> Result<Circuit> {
    if spec.kind != FeatureMapKind::Iqp {
        return Err(QkaError::invalid("expected an IQP feature map spec"));
    }
    feature_map_circuit(spec, x)
}

pub fn build_feature_map(spec: &FeatureMapSpec, x: &[f64]) -> Result<Circuit> {
    feature_map_circuit(spec, x)
}

/// Layered rotation/entanglement template; parameters are ordered layer by
/// layer (RY for every qubit, then RZ for every qubit when hardware-efficient).
pub fn ansatz_template(spec: &AnsatzSpec) -> Result<ParamCircuit> {
    spec.validate()?;
    let n = spec.n_qubits;
    let pairs = spec.entanglement.pairs(n);
    let mut ops = Vec::new();
    let mut names = Vec::with_capacity(spec.parameter_count());
    let rotation_layer = |ops: &mut Vec<Op>, names: &mut Vec<String>| {
        for q in 0..n {
            ops.push(Op::Ry(q, Angle::Param(names.len())));
            names.push(format!("θ[{}]", names.len()));
        }
        if spec.kind == AnsatzKind::He {
            for q in 0..n {
                ops.push(Op::Rz(q, Angle::Param(names.len())));
                names.push(format!("θ[{}]", names.len()));
            }
        }
    };
    for _ in 0..spec.reps {
        rotation_layer(&mut ops, &mut names);
        ops.extend(pairs.iter().map(|&(c, t)| Op::Cx(c, t)));
    }
    rotation_layer(&mut ops, &mut names);
    debug_assert_eq!(names.len(), spec.parameter_count());
    Ok(ParamCircuit {
        n_qubits: n,
        ops,
        param_names: names,
    })
}

pub fn build_ansatz(spec: &AnsatzSpec, theta: &[f64]) -> Result<Circuit> {
    ansatz_template(spec)?.bind(theta)
}

fn check_widths(ansatz: &AnsatzSpec, fmap: &FeatureMapSpec) -> Result<()> {
    if ansatz.n_qubits != fmap.n_qubits {
        return Err(QkaError::DimensionMismatch {
            context: "ansatz vs feature map qubits",
            expected: fmap.n_qubits,
            found: ansatz.n_qubits,
        });
    }
    Ok(())
}

/// Full preparation circuit `U_φ(x) U(θ)`, ansatz first.
pub fn preparation_circuit(ansatz: &AnsatzSpec, fmap: &FeatureMapSpec, theta: &[f64], x: &[f64]) -> Result<Circuit> {
    check_widths(ansatz, fmap)?;
    Ok(build_ansatz(ansatz, theta)?.then(build_feature_map(fmap, x)?))
}

pub fn state_prep(ansatz: &AnsatzSpec, fmap: &FeatureMapSpec, theta: &[f64], x: &[f64]) -> Result<Statevector> {
    preparation_circuit(ansatz, fmap, theta, x)?.run_from_zero()
}

/// Prepares `U(θ)|0…0⟩` once so many data points can reuse it.
pub fn ansatz_state(ansatz: &AnsatzSpec, theta: &[f64]) -> Result<Statevector> {
    build_ansatz(ansatz, theta)?.run_from_zero()
}

/// Applies `U_φ(x)` to a prepared ansatz state.
pub fn encode_from(base: &Statevector, fmap: &FeatureMapSpec, x: &[f64]) -> Result<Statevector> {
    let mut s = base.clone();
    build_feature_map(fmap, x)?.apply_to(&mut s)?;
    Ok(s)
}

/// Deterministic initial parameters, uniform in `[0, 1)`.
pub fn initial_theta(n_params: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_params).map(|_| rng.random::<f64>()).collect()
}

/// Diagonal of `Z_i Z_j`, exposed for labeling observables.
pub fn zz_observable(n_qubits: usize, i: usize, j: usize) -> Vec<f64> {
    z_diagonal(n_qubits, &[i, j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevector::fidelity;

    #[test]
    fn parameter_counts() {
        for n in 1..=10 {
            for reps in 1..=4 {
                let mut spec = AnsatzSpec::new(AnsatzKind::Ra, n);
                spec.reps = reps;
                assert_eq!(spec.parameter_count(), n * (reps + 1));
                assert_eq!(ansatz_template(&spec).unwrap().n_params(), n * (reps + 1));
                spec.kind = AnsatzKind::He;
                spec.entanglement = Entanglement::Full;
                assert_eq!(spec.parameter_count(), 2 * n * (reps + 1));
                assert_eq!(ansatz_template(&spec).unwrap().n_params(), 2 * n * (reps + 1));
            }
        }
        assert_eq!(AnsatzSpec::new(AnsatzKind::Ra, 2).parameter_count(), 4);
    }

    #[test]
    fn zero_theta_is_identity_on_zero_state() {
        for kind in [AnsatzKind::Ra, AnsatzKind::He] {
            let spec = AnsatzSpec::new(kind, 3);
            let s = ansatz_state(&spec, &vec![0.0; spec.parameter_count()]).unwrap();
            assert!((s.probability(0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ra_single_qubit_rotation() {
        let spec = AnsatzSpec::new(AnsatzKind::Ra, 1);
        let s = ansatz_state(&spec, &[PI / 2.0, 0.0]).unwrap();
        let c = (PI / 4.0).cos();
        assert!((s.amplitudes()[0].re - c).abs() < 1e-12);
        assert!((s.amplitudes()[1].re - (PI / 4.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn wrong_parameter_count() {
        let spec = AnsatzSpec::new(AnsatzKind::He, 2);
        assert!(matches!(
            build_ansatz(&spec, &[0.0; 3]),
            Err(QkaError::DimensionMismatch {
                expected: 8,
                found: 3,
                ..
            })
        ));
    }

    #[test]
    fn iqp_zero_input_returns_to_zero_state() {
        let spec = FeatureMapSpec::iqp(3);
        let s = build_iqp_feature_map(&spec, &[0.0; 3])
            .unwrap()
            .run_from_zero()
            .unwrap();
        assert!((s.probability(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iqp_default_bandwidth() {
        assert!((FeatureMapSpec::iqp(10).effective_bandwidth() - 0.2).abs() < 1e-15);
        let bad = FeatureMapSpec::iqp(2).with_bandwidth(0.0);
        assert!(build_iqp_feature_map(&bad, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn feature_map_dimension_checked() {
        let spec = FeatureMapSpec::zz(2);
        assert!(matches!(
            build_zz_feature_map(&spec, &[0.1, 0.2, 0.3]),
            Err(QkaError::DimensionMismatch { .. })
        ));
        assert!(build_zz_feature_map(&FeatureMapSpec::iqp(2), &[0.1, 0.2]).is_err());
    }

    #[test]
    fn theta_zero_gives_feature_map_state() {
        let a = AnsatzSpec::new(AnsatzKind::He, 2);
        let f = FeatureMapSpec::zz(2);
        let x = [0.7, 2.1];
        let with = state_prep(&a, &f, &[0.0; 8], &x).unwrap();
        let without = build_zz_feature_map(&f, &x).unwrap().run_from_zero().unwrap();
        assert!((fidelity(&with, &without).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_have_unit_fidelity() {
        let a = AnsatzSpec::new(AnsatzKind::Ra, 2);
        let f = FeatureMapSpec::zz(2);
        let theta = initial_theta(4, 3);
        let s1 = state_prep(&a, &f, &theta, &[1.0, 4.0]).unwrap();
        let s2 = state_prep(&a, &f, &theta, &[1.0, 4.0]).unwrap();
        assert!((fidelity(&s1, &s2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_theta_deterministic_and_in_range() {
        let a = initial_theta(8, 42);
        assert_eq!(a, initial_theta(8, 42));
        assert_ne!(a, initial_theta(8, 43));
        assert!(a.iter().all(|v| (0.0..1.0).contains(v)));
    }
}
