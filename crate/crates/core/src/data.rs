//! Datasets: the separable synthetic generator, CSV ingestion, and
//! stratified splitting.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circuits::{build_zz_feature_map, FeatureMapSpec};
use crate::error::{QkaError, Result};
use crate::seeding;
use crate::statevector::{z_diagonal, Statevector};

/// Labeled feature table with `±1` labels and both classes present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            features,
            labels,
            seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(QkaError::DimensionMismatch {
                context: "labels vs rows",
                expected: self.features.len(),
                found: self.labels.len(),
            });
        }
        let d = self.dim();
        if d == 0 {
            return Err(QkaError::invalid("dataset has no feature columns"));
        }
        for row in &self.features {
            if row.len() != d {
                return Err(QkaError::DimensionMismatch {
                    context: "feature row width",
                    expected: d,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(QkaError::NonFinite("dataset features"));
            }
        }
        crate::svm::validate_labels(&self.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|y| **y > 0.0).count();
        (pos, self.len() - pos)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.name.clone(),
            indices.iter().map(|&i| self.features[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Header `x0,…,x{d-1},label`, one row per sample.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, y) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{}", *y as i64));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV with a header row, feature columns, and a final `±1` label column.
pub fn load_embeddings_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(QkaError::Malformed {
            line: 1,
            reason: "need at least one feature column and a label column".into(),
        });
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| QkaError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != width {
            return Err(QkaError::Malformed {
                line,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let values: Vec<f64> = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| QkaError::Malformed {
                    line,
                    reason: format!("'{f}' is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        let (x, y) = values.split_at(width - 1);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(QkaError::NonFinite("dataset features"));
        }
        if y[0] != 1.0 && y[0] != -1.0 {
            return Err(QkaError::Malformed {
                line,
                reason: format!("label {} is not ±1", y[0]),
            });
        }
        features.push(x.to_vec());
        labels.push(y[0]);
    }
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HavlicekParams {
    pub n_qubits: usize,
    pub m_train: usize,
    pub m_test: usize,
    pub gap: f64,
    pub seed: u64,
}

impl Default for HavlicekParams {
    fn default() -> Self {
        Self {
            n_qubits: 2,
            m_train: 96,
            m_test: 32,
            gap: 0.2,
            seed: 2024,
        }
    }
}

/// Draw limit for rejection sampling.
pub const REJECTION_BUDGET: usize = 2_000_000;

/// Labels points by the sign of `⟨φ(x)| V† Z⊗…⊗Z V |φ(x)⟩`, where `φ` is the
/// ZZ feature map and `V` a seeded Haar-random unitary.
#[derive(Debug, Clone)]
pub struct HavlicekLabeler {
    pub feature_map: FeatureMapSpec,
    pub unitary: DMatrix<Complex64>,
    pub observable: Vec<f64>,
    pub gap: f64,
}

impl HavlicekLabeler {
    pub fn new(n_qubits: usize, gap: f64, seed: u64) -> Result<Self> {
        if !(gap > 0.0 && gap < 1.0) {
            return Err(QkaError::invalid(format!("gap {gap} must lie in (0, 1)")));
        }
        let qubits: Vec<usize> = (0..n_qubits).collect();
        Ok(Self {
            feature_map: FeatureMapSpec::zz(n_qubits),
            unitary: haar_unitary(1 << n_qubits, seed),
            observable: z_diagonal(n_qubits, &qubits),
            gap,
        })
    }

    pub fn expectation(&self, x: &[f64]) -> Result<f64> {
        let phi = build_zz_feature_map(&self.feature_map, x)?.run_from_zero()?;
        let v = &self.unitary * nalgebra::DVector::from_column_slice(phi.amplitudes());
        Statevector::from_amplitudes(v.iter().copied().collect())?.expectation_diag(&self.observable)
    }

    /// `Some(±1)` when the point clears the gap.
    pub fn label(&self, x: &[f64]) -> Result<Option<f64>> {
        let e = self.expectation(x)?;
        Ok(if e.abs() >= self.gap { Some(e.signum()) } else { None })
    }
}

/// Haar-random unitary from Gram–Schmidt on a complex Gaussian matrix.
pub fn haar_unitary(dim: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = seeding::stream(seed, &[0x4841_4152]);
    let mut g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    for j in 0..dim {
        for p in 0..j {
            let proj: Complex64 = (0..dim).map(|r| g[(r, p)].conj() * g[(r, j)]).sum();
            for r in 0..dim {
                let sub = proj * g[(r, p)];
                g[(r, j)] -= sub;
            }
        }
        let norm = (0..dim).map(|r| g[(r, j)].norm_sqr()).sum::<f64>().sqrt();
        for r in 0..dim {
            g[(r, j)] /= norm;
        }
    }
    g
}

/// Balanced train/test sets from the gap-separated quantum labeling.
pub fn generate_havlicek(params: &HavlicekParams) -> Result<(Dataset, Dataset, HavlicekLabeler)> {
    let labeler = HavlicekLabeler::new(params.n_qubits, params.gap, params.seed)?;
    let mut rng = seeding::stream(params.seed, &[0x5341_4d50]);
    let mut draws = 0usize;
    let mut sample = |m: usize, name: &str| -> Result<Dataset> {
        let want_pos = m.div_ceil(2);
        let want_neg = m / 2;
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        while pos.len() < want_pos || neg.len() < want_neg {
            draws += 1;
            if draws > REJECTION_BUDGET {
                return Err(QkaError::RejectionBudget(REJECTION_BUDGET));
            }
            let x: Vec<f64> = (0..params.n_qubits).map(|_| rng.random::<f64>() * TAU).collect();
            match labeler.label(&x)? {
                Some(y) if y > 0.0 && pos.len() < want_pos => pos.push(x),
                Some(y) if y < 0.0 && neg.len() < want_neg => neg.push(x),
                _ => {}
            }
        }
        // interleave so row order carries no block structure
        let mut rows: Vec<(Vec<f64>, f64)> = pos
            .into_iter()
            .map(|x| (x, 1.0))
            .chain(neg.into_iter().map(|x| (x, -1.0)))
            .collect();
        rows.shuffle(&mut rng);
        let (features, labels) = rows.into_iter().unzip();
        let mut ds = Dataset::new(name, features, labels)?;
        ds.seed = Some(params.seed);
        Ok(ds)
    };
    let train = sample(params.m_train, "havlicek-train")?;
    let test = sample(params.m_test, "havlicek-test")?;
    Ok((train, test, labeler))
}

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorManifest {
    pub generator: String,
    pub params: HavlicekParams,
    pub feature_range: [f64; 2],
    pub feature_map: FeatureMapSpec,
    pub observable: String,
    pub unitary_re: Vec<Vec<f64>>,
    pub unitary_im: Vec<Vec<f64>>,
    pub train_class_counts: (usize, usize),
    pub test_class_counts: (usize, usize),
}

impl GeneratorManifest {
    pub fn new(params: &HavlicekParams, labeler: &HavlicekLabeler, train: &Dataset, test: &Dataset) -> Self {
        let u = &labeler.unitary;
        let part = |f: fn(&Complex64) -> f64| {
            (0..u.nrows())
                .map(|r| (0..u.ncols()).map(|c| f(&u[(r, c)])).collect())
                .collect()
        };
        Self {
            generator: "havlicek".into(),
            params: *params,
            feature_range: [0.0, TAU],
            feature_map: labeler.feature_map.clone(),
            observable: "parity Z^{⊗n} after V".into(),
            unitary_re: part(|c| c.re),
            unitary_im: part(|c| c.im),
            train_class_counts: train.class_counts(),
            test_class_counts: test.class_counts(),
        }
    }
}

/// Fold assignment per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// `(train, held_out)` positions for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != f)
    }

    pub fn fold_members(&self, f: usize) -> Vec<usize> {
        self.split(f).1
    }
}

fn class_indices(labels: &[f64]) -> (Vec<usize>, Vec<usize>) {
    (0..labels.len()).partition(|&i| labels[i] > 0.0)
}

/// Stratified folds: shuffled members of each class dealt round-robin, the
/// second class continuing where the first stopped. Falls back to fewer folds
/// when the minority class is smaller than `n_folds`.
pub fn stratified_folds(labels: &[f64], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    crate::svm::validate_labels(labels)?;
    let (mut pos, mut neg) = class_indices(labels);
    let n_folds = n_folds.min(pos.len()).min(neg.len());
    if n_folds < 2 || labels.len() < n_folds {
        return Err(QkaError::invalid(format!(
            "too few samples per class for cross-validation ({} / {})",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = seeding::stream(seed, &[0x464f_4c44]);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignments = vec![0; labels.len()];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        assignments[i] = slot % n_folds;
    }
    Ok(FoldPlan {
        n_folds,
        assignments,
        seed,
    })
}

/// Stratified hold-out: roughly `fraction` of each class (at least one) goes
/// to the second returned index list.
pub fn stratified_split(labels: &[f64], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    crate::svm::validate_labels(labels)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(QkaError::invalid(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    let mut rng = seeding::stream(seed, &[0x5350_4c54]);
    let mut fit = Vec::new();
    let mut held = Vec::new();
    let (pos, neg) = class_indices(labels);
    for mut class in [pos, neg] {
        if class.len() < 2 {
            return Err(QkaError::invalid("each class needs two members to split"));
        }
        class.shuffle(&mut rng);
        let n_held = ((class.len() as f64 * fraction).round() as usize).clamp(1, class.len() - 1);
        held.extend_from_slice(&class[..n_held]);
        fit.extend_from_slice(&class[n_held..]);
    }
    fit.sort_unstable();
    held.sort_unstable();
    Ok((fit, held))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn haar_unitary_is_unitary() {
        let u = haar_unitary(4, 7);
        let prod = u.adjoint() * &u;
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn generator_sizes_balance_and_gap() {
        let params = HavlicekParams::default();
        let (train, test, labeler) = generate_havlicek(&params).unwrap();
        assert_eq!(train.len(), 96);
        assert_eq!(test.len(), 32);
        assert_eq!(train.class_counts(), (48, 48));
        assert_eq!(test.class_counts(), (16, 16));
        for (x, y) in train
            .features
            .iter()
            .chain(&test.features)
            .zip(train.labels.iter().chain(&test.labels))
        {
            let e = labeler.expectation(x).unwrap();
            assert!(e.abs() >= 0.2 - 1e-10);
            assert_eq!(e.signum(), *y);
            assert!(x.iter().all(|v| (0.0..TAU).contains(v)));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let params = HavlicekParams {
            m_train: 10,
            m_test: 4,
            ..Default::default()
        };
        let a = generate_havlicek(&params).unwrap();
        let b = generate_havlicek(&params).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_havlicek(&HavlicekParams { seed: 1, ..params }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn bad_gap_rejected() {
        let params = HavlicekParams {
            gap: 1.0,
            ..Default::default()
        };
        assert!(generate_havlicek(&params).is_err());
    }

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_well_formed() {
        let f = write_tmp("a,b,label\n0.1,0.2,1\n0.3,0.4,-1\n1e-3,5,1\n");
        let ds = load_embeddings_csv(f.path()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels, vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn csv_rejections() {
        let zeros = write_tmp("a,label\n0.1,0\n0.2,0\n");
        assert!(matches!(
            load_embeddings_csv(zeros.path()),
            Err(QkaError::Malformed { line: 2, .. })
        ));
        let single = write_tmp("a,label\n0.1,1\n0.2,1\n");
        assert!(matches!(load_embeddings_csv(single.path()), Err(QkaError::SingleClass)));
        let ragged = write_tmp("a,b,label\n0.1,0.2,1\n0.3,-1\n");
        assert!(load_embeddings_csv(ragged.path()).is_err());
        let nan = write_tmp("a,label\nNaN,1\n0.2,-1\n");
        assert!(matches!(load_embeddings_csv(nan.path()), Err(QkaError::NonFinite(_))));
        let text = write_tmp("a,label\nfoo,1\n0.2,-1\n");
        assert!(load_embeddings_csv(text.path()).is_err());
    }

    #[test]
    fn folds_balanced_twenty() {
        let labels: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { -1.0 }).collect();
        let plan = stratified_folds(&labels, 10, 3).unwrap();
        for f in 0..10 {
            let members = plan.fold_members(f);
            assert_eq!(members.len(), 2);
            assert_eq!(members.iter().filter(|&&i| labels[i] > 0.0).count(), 1);
        }
        assert_eq!(plan, stratified_folds(&labels, 10, 3).unwrap());
    }

    #[test]
    fn folds_fall_back_to_minority_count() {
        let labels: Vec<f64> = (0..12).map(|i| if i < 3 { 1.0 } else { -1.0 }).collect();
        assert_eq!(stratified_folds(&labels, 10, 0).unwrap().n_folds, 3);
        let tiny = [1.0, -1.0, -1.0];
        assert!(stratified_folds(&tiny, 10, 0).is_err());
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<f64> = (0..50).map(|i| if i % 5 == 0 { 1.0 } else { -1.0 }).collect();
        let (fit, held) = stratified_split(&labels, 0.2, 1).unwrap();
        assert_eq!(fit.len() + held.len(), 50);
        assert_eq!(held.iter().filter(|&&i| labels[i] > 0.0).count(), 2);
        assert_eq!(held.len(), 10);
    }
}
