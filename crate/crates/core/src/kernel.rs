//! Fidelity kernel matrices and query accounting.
//!
//! A query is one fidelity-evaluation circuit. In exact mode the states are
//! simulated once per point and cached, but the ledger still counts one query
//! per evaluated pair since hardware cannot reuse states.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use nalgebra::DMatrix;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuits::{ansatz_state, encode_from, preparation_circuit, AnsatzSpec, FeatureMapSpec};
use crate::error::{ensure_finite, QkaError, Result};
use crate::seeding;
use crate::statevector::{fidelity, Statevector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryConvention {
    /// `k(k−1)/2`: unit diagonal and symmetry are exploited.
    #[default]
    Pairs,
    /// `k²`: every entry is evaluated.
    Squared,
}

impl FromStr for QueryConvention {
    type Err = QkaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(Self::Pairs),
            "squared" => Ok(Self::Squared),
            other => Err(QkaError::invalid(format!("unknown query convention '{other}'"))),
        }
    }
}

impl fmt::Display for QueryConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pairs => "pairs",
            Self::Squared => "squared",
        })
    }
}

pub fn query_cost(k: usize, convention: QueryConvention) -> u64 {
    let k = k as u64;
    match convention {
        QueryConvention::Pairs => k * k.saturating_sub(1) / 2,
        QueryConvention::Squared => k * k,
    }
}

/// How kernel entries are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelMode {
    #[default]
    Exact,
    /// Binomial estimate of the compute–uncompute all-zeros probability.
    Shots { shots: u64, seed: u64 },
}

impl FromStr for KernelMode {
    type Err = QkaError;

    /// Accepts `exact`, `shots:N` or `shots:N:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(Self::Exact);
        }
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| QkaError::invalid(format!("bad kernel mode '{s}'")))
        };
        match parts.as_slice() {
            ["shots", n] => Ok(Self::Shots {
                shots: parse(n)?,
                seed: 0,
            }),
            ["shots", n, seed] => Ok(Self::Shots {
                shots: parse(n)?,
                seed: parse(seed)?,
            }),
            _ => Err(QkaError::invalid(format!("bad kernel mode '{s}'"))),
        }
    }
}

impl TryFrom<String> for KernelMode {
    type Error = QkaError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelMode> for String {
    fn from(m: KernelMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => f.write_str("exact"),
            Self::Shots { shots, seed } => write!(f, "shots:{shots}:{seed}"),
        }
    }
}

/// Thread-safe query counter with a phase-tagged event log.
#[derive(Debug, Default)]
pub struct QueryLedger {
    convention: QueryConvention,
    total: AtomicU64,
    events: Mutex<Vec<(String, u64)>>,
}

impl QueryLedger {
    pub fn new(convention: QueryConvention) -> Self {
        Self {
            convention,
            ..Default::default()
        }
    }

    pub fn convention(&self) -> QueryConvention {
        self.convention
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::SeqCst)
    }

    pub fn record(&self, phase: &str, count: u64) {
        let mut events = self.events.lock().expect("ledger poisoned");
        self.total.fetch_add(count, Ordering::SeqCst);
        events.push((phase.to_string(), count));
    }

    pub fn events(&self) -> Vec<(String, u64)> {
        self.events.lock().expect("ledger poisoned").clone()
    }

    pub fn total_for(&self, phase: &str) -> u64 {
        self.events
            .lock()
            .expect("ledger poisoned")
            .iter()
            .filter(|(p, _)| p == phase)
            .map(|(_, c)| c)
            .sum()
    }
}

/// Symmetric Gram matrix with the indices and θ it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub indices: Vec<usize>,
    pub theta: Vec<f64>,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.values)
    }

    /// Sub-matrix on positions (not dataset indices) `rows × cols`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.values[(rows[i], cols[j])])
    }

    pub fn theta_hash(&self) -> String {
        theta_hash(&self.theta)
    }

    /// Row-major CSV; the header carries the θ hash and the dataset indices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![format!("theta={}", self.theta_hash())];
        header.extend(self.indices.iter().map(|i| i.to_string()));
        w.write_record(&header)?;
        for (r, idx) in self.indices.iter().enumerate() {
            let mut row = vec![idx.to_string()];
            row.extend((0..self.size()).map(|c| format!("{:.17e}", self.values[(r, c)])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn theta_hash(theta: &[f64]) -> String {
    let mut h = Sha256::new();
    for t in theta {
        h.update(t.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Clips negative eigenvalues to zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    // restore exact symmetry after the round trip
    for i in 0..out.nrows() {
        for j in 0..i {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// `Binomial(N, p) / N` with a seeded stream.
pub fn estimate_fidelity_shots(p: f64, shots: u64, seed: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QkaError::invalid(format!("probability {p} outside [0, 1]")));
    }
    if shots == 0 {
        return Err(QkaError::invalid("shot count must be >= 1"));
    }
    let dist = Binomial::new(shots, p).map_err(|e| QkaError::invalid(e.to_string()))?;
    let mut rng = seeding::stream(seed, &[]);
    Ok(dist.sample(&mut rng) as f64 / shots as f64)
}

/// All-zeros probability of `U†(x′) U(x) |0⟩`.
pub fn compute_uncompute_probability(
    ansatz: &AnsatzSpec,
    fmap: &FeatureMapSpec,
    theta: &[f64],
    x: &[f64],
    x_prime: &[f64],
) -> Result<f64> {
    let circuit =
        preparation_circuit(ansatz, fmap, theta, x)?.then(preparation_circuit(ansatz, fmap, theta, x_prime)?.inverse());
    Ok(circuit.run_from_zero()?.probability(0).min(1.0))
}

/// Ansatz + feature map + estimation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumKernel {
    pub feature_map: FeatureMapSpec,
    pub ansatz: AnsatzSpec,
    pub mode: KernelMode,
}

impl QuantumKernel {
    pub fn new(feature_map: FeatureMapSpec, ansatz: AnsatzSpec) -> Self {
        Self {
            feature_map,
            ansatz,
            mode: KernelMode::Exact,
        }
    }

    pub fn with_mode(mut self, mode: KernelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_map.validate()?;
        self.ansatz.validate()?;
        if self.ansatz.n_qubits != self.feature_map.n_qubits {
            return Err(QkaError::DimensionMismatch {
                context: "ansatz vs feature map qubits",
                expected: self.feature_map.n_qubits,
                found: self.ansatz.n_qubits,
            });
        }
        if let KernelMode::Shots { shots: 0, .. } = self.mode {
            return Err(QkaError::invalid("shot count must be >= 1"));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.ansatz.parameter_count()
    }

    pub fn states(&self, theta: &[f64], points: &[&[f64]]) -> Result<Vec<Statevector>> {
        let base = ansatz_state(&self.ansatz, theta)?;
        points
            .par_iter()
            .map(|x| encode_from(&base, &self.feature_map, x))
            .collect()
    }

    fn entry(
        &self,
        theta: &[f64],
        states: (&Statevector, &Statevector),
        points: (&[f64], &[f64]),
        stream: [u64; 3],
    ) -> Result<f64> {
        match self.mode {
            KernelMode::Exact => fidelity(states.0, states.1),
            KernelMode::Shots { shots, seed } => {
                let p = compute_uncompute_probability(&self.ansatz, &self.feature_map, theta, points.0, points.1)?;
                estimate_fidelity_shots(p, shots, seeding::derive_seed(seed, &stream))
            }
        }
    }

    /// Kernel on `data[indices]`. `nonce` decorrelates shot streams between
    /// calls; it is ignored in exact mode.
    pub fn build(
        &self,
        data: &[Vec<f64>],
        indices: &[usize],
        theta: &[f64],
        ledger: &QueryLedger,
        phase: &str,
        nonce: u64,
    ) -> Result<KernelMatrix> {
        self.validate()?;
        if indices.is_empty() {
            return Err(QkaError::invalid("kernel needs at least one point"));
        }
        if theta.len() != self.n_params() {
            return Err(QkaError::DimensionMismatch {
                context: "kernel parameters",
                expected: self.n_params(),
                found: theta.len(),
            });
        }
        ensure_finite(theta, "kernel parameters")?;
        let points: Vec<&[f64]> = indices
            .iter()
            .map(|&i| {
                data.get(i)
                    .map(Vec::as_slice)
                    .ok_or_else(|| QkaError::invalid(format!("row index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        for p in &points {
            ensure_finite(p, "kernel data")?;
        }
        let states = self.states(theta, &points)?;
        let k = indices.len();
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
        let upper: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| {
                self.entry(
                    theta,
                    (&states[i], &states[j]),
                    (points[i], points[j]),
                    [nonce, indices[i] as u64, indices[j] as u64],
                )
            })
            .collect::<Result<_>>()?;
        let mut values = DMatrix::identity(k, k);
        for (&(i, j), v) in pairs.iter().zip(upper) {
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
        ledger.record(phase, query_cost(k, ledger.convention()));
        Ok(KernelMatrix {
            values,
            indices: indices.to_vec(),
            theta: theta.to_vec(),
        })
    }

    /// Rectangular kernel `K(a_i, b_j)`; every entry counts as a query.
    pub fn cross(
        &self,
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        theta: &[f64],
        ledger: &QueryLedger,
        phase: &str,
        nonce: u64,
    ) -> Result<DMatrix<f64>> {
        self.validate()?;
        let pa: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let pb: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
        for p in pa.iter().chain(&pb) {
            ensure_finite(p, "kernel data")?;
        }
        let sa = self.states(theta, &pa)?;
        let sb = self.states(theta, &pb)?;
        let entries: Vec<f64> = (0..a.len() * b.len())
            .into_par_iter()
            .map(|flat| {
                let (i, j) = (flat / b.len(), flat % b.len());
                self.entry(
                    theta,
                    (&sa[i], &sb[j]),
                    (pa[i], pb[j]),
                    [nonce, i as u64, (b.len() + j) as u64],
                )
            })
            .collect::<Result<_>>()?;
        ledger.record(phase, (a.len() * b.len()) as u64);
        Ok(DMatrix::from_row_slice(a.len(), b.len(), &entries))
    }
}

/// Full kernel over every row of `data`.
pub fn build_kernel(
    data: &[Vec<f64>],
    theta: &[f64],
    kernel: &QuantumKernel,
    ledger: &QueryLedger,
) -> Result<KernelMatrix> {
    if data.len() < 2 {
        return Err(QkaError::invalid("kernel needs at least two data rows"));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    kernel.build(data, &indices, theta, ledger, "kernel", 0)
}
