//! Dense statevector simulation.
//!
//! Qubit ordering is little-endian: qubit `q` is bit `q` of the amplitude
//! index, so `|q1 q0⟩ = |01⟩` is amplitude index 1.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{QkaError, Result};

const MAX_QUBITS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Ry {
        qubit: usize,
        angle: f64,
    },
    Rz {
        qubit: usize,
        angle: f64,
    },
    Cx {
        control: usize,
        target: usize,
    },
    /// Multiplies amplitude `b` by `exp(i * phases[b])`.
    PhaseDiag(Vec<f64>),
}

impl Gate {
    pub fn inverse(&self) -> Gate {
        match self {
            Gate::H(q) => Gate::H(*q),
            Gate::X(q) => Gate::X(*q),
            Gate::Ry { qubit, angle } => Gate::Ry {
                qubit: *qubit,
                angle: -angle,
            },
            Gate::Rz { qubit, angle } => Gate::Rz {
                qubit: *qubit,
                angle: -angle,
            },
            Gate::Cx { control, target } => Gate::Cx {
                control: *control,
                target: *target,
            },
            Gate::PhaseDiag(phases) => Gate::PhaseDiag(phases.iter().map(|p| -p).collect()),
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q < n_qubits {
                Ok(())
            } else {
                Err(QkaError::QubitOutOfRange { index: q, n_qubits })
            }
        };
        match self {
            Gate::H(q) | Gate::X(q) => check(*q),
            Gate::Ry { qubit, angle } | Gate::Rz { qubit, angle } => {
                check(*qubit)?;
                if !angle.is_finite() {
                    return Err(QkaError::NonFinite("gate angle"));
                }
                Ok(())
            }
            Gate::Cx { control, target } => {
                check(*control)?;
                check(*target)?;
                if control == target {
                    return Err(QkaError::SameControlTarget(*control));
                }
                Ok(())
            }
            Gate::PhaseDiag(phases) => {
                let dim = 1usize << n_qubits;
                if phases.len() != dim {
                    return Err(QkaError::DimensionMismatch {
                        context: "phase diagonal",
                        expected: dim,
                        found: phases.len(),
                    });
                }
                if phases.iter().any(|p| !p.is_finite()) {
                    return Err(QkaError::NonFinite("phase diagonal"));
                }
                Ok(())
            }
        }
    }
}

/// Normalized amplitude vector over `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// The all-zeros basis state `|0...0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(QkaError::invalid(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes, renormalizing them.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QkaError::invalid(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QkaError::NonFinite("amplitudes"));
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probability(&self, basis_index: usize) -> f64 {
        self.amps[basis_index].norm_sqr()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Statevector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(QkaError::DimensionMismatch {
                context: "inner product",
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Expectation value of a real diagonal observable.
    pub fn expectation_diag(&self, diag: &[f64]) -> Result<f64> {
        if diag.len() != self.amps.len() {
            return Err(QkaError::DimensionMismatch {
                context: "diagonal observable",
                expected: self.amps.len(),
                found: diag.len(),
            });
        }
        Ok(self.amps.iter().zip(diag).map(|(a, d)| a.norm_sqr() * d).sum())
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match gate {
            Gate::H(q) => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_1q(*q, [[h, h], [h, -h]]);
            }
            Gate::X(q) => {
                let bit = 1usize << q;
                for i in 0..self.amps.len() {
                    if i & bit == 0 {
                        self.amps.swap(i, i | bit);
                    }
                }
            }
            Gate::Ry { qubit, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                let c = Complex64::new(c, 0.0);
                let s = Complex64::new(s, 0.0);
                self.apply_1q(*qubit, [[c, -s], [s, c]]);
            }
            Gate::Rz { qubit, angle } => {
                let lo = Complex64::from_polar(1.0, -angle / 2.0);
                let hi = Complex64::from_polar(1.0, angle / 2.0);
                let bit = 1usize << qubit;
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & bit == 0 { lo } else { hi };
                }
            }
            Gate::Cx { control, target } => {
                let cbit = 1usize << control;
                let tbit = 1usize << target;
                for i in 0..self.amps.len() {
                    if i & cbit != 0 && i & tbit == 0 {
                        self.amps.swap(i, i | tbit);
                    }
                }
            }
            Gate::PhaseDiag(phases) => {
                for (a, p) in self.amps.iter_mut().zip(phases) {
                    *a *= Complex64::from_polar(1.0, *p);
                }
            }
        }
        Ok(())
    }

    fn apply_1q(&mut self, qubit: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << qubit;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }
}

/// Returns `U_g |state⟩` without touching the input.
pub fn apply_gate(state: &Statevector, gate: &Gate) -> Result<Statevector> {
    let mut out = state.clone();
    out.apply(gate)?;
    Ok(out)
}

/// `|⟨a|b⟩|²`, clamped to `[0, 1]`.
pub fn fidelity(a: &Statevector, b: &Statevector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// Diagonal of `Z_i` in the computational basis: `+1` where bit `i` is 0.
pub fn z_diagonal(n_qubits: usize, qubits: &[usize]) -> Vec<f64> {
    (0..1usize << n_qubits)
        .map(|b| {
            let parity = qubits.iter().filter(|&&q| b >> q & 1 == 1).count();
            if parity % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}
