use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qka::circuits::{AnsatzKind, Entanglement, FeatureMapKind};
use qka::data::{generate_havlicek, GeneratorManifest, HavlicekParams};
use qka::eval::baseline::{classical_baseline, BaselineGrid, ClassicalKernelKind};
use qka::eval::config::{CsvSource, DatasetSpec, ExperimentConfig, OptimizerSection};
use qka::eval::report::write_results_csv;
use qka::eval::{run_experiment, run_sweep, ResultRow, SweepConfig};
use qka::kernel::{KernelMode, QueryConvention};
use qka::optim::OptimizerKind;

#[derive(Parser)]
#[command(name = "qka", version, about = "Sub-sampled quantum kernel alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic train/test CSVs and the generator manifest.
    Generate(GenerateArgs),
    /// Train, finalize and score one configuration over several seeds.
    Train(Box<TrainArgs>),
    /// Run every row of a sweep file and assemble one results table.
    Sweep(SweepArgs),
    /// Grid-searched classical kernel SVM (linear, polynomial, RBF).
    Baseline(Box<BaselineArgs>),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    n_qubits: usize,
    #[arg(long, default_value_t = 96)]
    m_train: usize,
    #[arg(long, default_value_t = 32)]
    m_test: usize,
    #[arg(long, default_value_t = 0.2)]
    gap: f64,
    #[arg(long, default_value_t = HavlicekParams::default().seed)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Havlicek,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureMapArg {
    Zz,
    Iqp,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnsatzArg {
    Ra,
    He,
}

#[derive(Clone, Copy, ValueEnum)]
enum EntanglementArg {
    Linear,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Spsa,
    Adam,
    Gd,
}

/// Dataset selection shared by `train` and `baseline`.
#[derive(Args, Default)]
struct DatasetArgs {
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    /// Training CSV (feature columns, label column last); implies `--dataset csv`.
    #[arg(long)]
    train_csv: Option<PathBuf>,
    #[arg(long)]
    test_csv: Option<PathBuf>,
    /// Hold-out fraction when no test CSV is given.
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    n_qubits: Option<usize>,
    #[arg(long)]
    m_train: Option<usize>,
    #[arg(long)]
    m_test: Option<usize>,
    #[arg(long)]
    gap: Option<f64>,
    /// Seed of the synthetic generator or of the CSV hold-out split.
    #[arg(long)]
    data_seed: Option<u64>,
}

impl DatasetArgs {
    fn apply(&self, spec: &mut DatasetSpec) -> Result<()> {
        let wants_csv = matches!(self.dataset, Some(DatasetArg::Csv)) || self.train_csv.is_some();
        if matches!(self.dataset, Some(DatasetArg::Havlicek)) && self.train_csv.is_some() {
            bail!("--train-csv conflicts with --dataset havlicek");
        }
        if wants_csv {
            let mut src = match spec {
                DatasetSpec::Csv(src) => src.clone(),
                DatasetSpec::Havlicek(_) => CsvSource {
                    train: self.train_csv.clone().context("--dataset csv needs --train-csv")?,
                    test: None,
                    test_fraction: 0.25,
                    split_seed: 0,
                },
            };
            if let Some(p) = &self.train_csv {
                src.train = p.clone();
            }
            if self.test_csv.is_some() {
                src.test = self.test_csv.clone();
            }
            if let Some(f) = self.test_fraction {
                src.test_fraction = f;
            }
            if let Some(s) = self.data_seed {
                src.split_seed = s;
            }
            *spec = DatasetSpec::Csv(src);
        } else if matches!(self.dataset, Some(DatasetArg::Havlicek)) || matches!(spec, DatasetSpec::Havlicek(_)) {
            let mut p = match spec {
                DatasetSpec::Havlicek(p) => *p,
                DatasetSpec::Csv(_) => HavlicekParams::default(),
            };
            p.n_qubits = self.n_qubits.unwrap_or(p.n_qubits);
            p.m_train = self.m_train.unwrap_or(p.m_train);
            p.m_test = self.m_test.unwrap_or(p.m_test);
            p.gap = self.gap.unwrap_or(p.gap);
            p.seed = self.data_seed.unwrap_or(p.seed);
            *spec = DatasetSpec::Havlicek(p);
        }
        Ok(())
    }
}

/// Every experiment field as an optional override of the config file.
#[derive(Args, Default)]
struct ExperimentArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_enum)]
    feature_map: Option<FeatureMapArg>,
    #[arg(long)]
    feature_map_reps: Option<usize>,
    /// IQP bandwidth `c` (default 2/n).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, value_enum)]
    ansatz: Option<AnsatzArg>,
    #[arg(long)]
    ansatz_reps: Option<usize>,
    #[arg(long, value_enum)]
    entanglement: Option<EntanglementArg>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    fd_step: Option<f64>,
    /// Subset size (default: all training points).
    #[arg(long)]
    k: Option<usize>,
    /// Sub-samples averaged per loss evaluation.
    #[arg(long)]
    s: Option<usize>,
    /// `pairs` (k(k−1)/2 per kernel) or `squared` (k²).
    #[arg(long)]
    query_convention: Option<QueryConvention>,
    /// `exact`, `shots:N` or `shots:N:SEED`.
    #[arg(long)]
    mode: Option<KernelMode>,
    #[arg(long)]
    train_c: Option<f64>,
    #[arg(long)]
    svm_tol: Option<f64>,
    /// Comma-separated candidates for the final classifier's C.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render loss curves as SVG.
    #[arg(long)]
    svg: bool,
    /// Skip the full-kernel reference run used for the speed-up column.
    #[arg(long)]
    no_baseline: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        self.dataset.apply(&mut cfg.dataset)?;
        if let Some(v) = self.feature_map {
            cfg.feature_map.kind = match v {
                FeatureMapArg::Zz => FeatureMapKind::Zz,
                FeatureMapArg::Iqp => FeatureMapKind::Iqp,
            };
        }
        set(&mut cfg.feature_map.reps, self.feature_map_reps);
        if self.bandwidth.is_some() {
            cfg.feature_map.bandwidth = self.bandwidth;
        }
        if let Some(v) = self.ansatz {
            cfg.ansatz.kind = match v {
                AnsatzArg::Ra => AnsatzKind::Ra,
                AnsatzArg::He => AnsatzKind::He,
            };
        }
        set(&mut cfg.ansatz.reps, self.ansatz_reps);
        if let Some(v) = self.entanglement {
            cfg.ansatz.entanglement = match v {
                EntanglementArg::Linear => Entanglement::Linear,
                EntanglementArg::Full => Entanglement::Full,
            };
        }
        if let Some(v) = self.optimizer {
            let kind = match v {
                OptimizerArg::Spsa => OptimizerKind::Spsa,
                OptimizerArg::Adam => OptimizerKind::Adam,
                OptimizerArg::Gd => OptimizerKind::Gd,
            };
            if kind != cfg.optimizer.kind {
                cfg.optimizer = OptimizerSection {
                    kind,
                    ..Default::default()
                };
            }
        }
        let opt = &mut cfg.optimizer;
        for (slot, value) in [
            (&mut opt.learning_rate, self.learning_rate),
            (&mut opt.perturbation, self.perturbation),
            (&mut opt.tolerance, self.tolerance),
            (&mut opt.fd_step, self.fd_step),
        ] {
            if value.is_some() {
                *slot = value;
            }
        }
        if self.max_iterations.is_some() {
            opt.max_iterations = self.max_iterations;
        }
        if self.k.is_some() {
            cfg.k = self.k;
        }
        set(&mut cfg.s, self.s);
        set(&mut cfg.query_convention, self.query_convention);
        set(&mut cfg.mode, self.mode);
        set(&mut cfg.train_c, self.train_c);
        set(&mut cfg.svm_tol, self.svm_tol);
        set(&mut cfg.c_grid, self.c_grid.clone());
        set(&mut cfg.validation_fraction, self.validation_fraction);
        set(&mut cfg.repetitions, self.repetitions);
        set(&mut cfg.cv_folds, self.cv_folds);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.output_dir, self.out.clone());
        cfg.render_svg |= self.svg;
        if self.no_baseline {
            cfg.speedup_baseline = false;
        }
        cfg.validate_fields()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `base.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassicalArg {
    Linear,
    Poly,
    Rbf,
}

#[derive(Args)]
struct BaselineArgs {
    /// TOML experiment config to take the dataset from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_enum, value_delimiter = ',')]
    kernels: Option<Vec<ClassicalArg>>,
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    degree: u32,
    #[arg(long, default_value_t = 0.2)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 10)]
    cv_folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn print_rows(rows: &[ResultRow]) {
    println!(
        "{:<8} {:<9} {:>5} {:>3} {:>8} {:>7} {:>12} {:>8} {:>7}",
        "ansatz", "optimizer", "k", "s", "roc_auc", "f1", "queries", "speed_up", "cv_std"
    );
    for r in rows {
        println!(
            "{:<8} {:<9} {:>5} {:>3} {:>8.4} {:>7.4} {:>12.1} {:>8} {:>7.4}",
            r.ansatz,
            r.optimizer,
            r.k,
            r.s,
            r.roc_auc,
            r.f1,
            r.queries,
            r.speed_up.map_or_else(|| "-".to_string(), |v| format!("{v:.2}")),
            r.cv_std
        );
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let params = HavlicekParams {
        n_qubits: args.n_qubits,
        m_train: args.m_train,
        m_test: args.m_test,
        gap: args.gap,
        seed: args.seed,
    };
    let (train, test, labeler) = generate_havlicek(&params)?;
    fs::create_dir_all(&args.out)?;
    train.save_csv(&args.out.join("train.csv"))?;
    test.save_csv(&args.out.join("test.csv"))?;
    let manifest = GeneratorManifest::new(&params, &labeler, &train, &test);
    fs::write(
        args.out.join("generator.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "wrote {} train / {} test points to {}",
        train.len(),
        test.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.experiment.resolve()?;
    let outcome = run_experiment(&cfg)?;
    let mut rows = Vec::new();
    if let Some(b) = &outcome.baseline {
        rows.push(b.row.clone());
    }
    rows.push(outcome.row.clone());
    print_rows(&rows);
    println!("artifacts in {}", outcome.output_dir.display());
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = SweepConfig::from_file(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    set(&mut cfg.base.output_dir, args.out.clone());
    set(&mut cfg.base.repetitions, args.repetitions);
    set(&mut cfg.base.seed, args.seed);
    if args.max_iterations.is_some() {
        cfg.base.optimizer.max_iterations = args.max_iterations;
    }
    cfg.base.validate_fields()?;
    let outcome = run_sweep(&cfg)?;
    print_rows(&outcome.rows);
    println!("results in {}", cfg.base.output_dir.join("results.csv").display());
    Ok(())
}

fn baseline(args: &BaselineArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?.dataset,
        None => DatasetSpec::default(),
    };
    args.dataset.apply(&mut spec)?;
    let data = spec.load()?;
    let mut grid = BaselineGrid {
        degree: args.degree,
        validation_fraction: args.validation_fraction,
        ..Default::default()
    };
    if let Some(kinds) = &args.kernels {
        grid.kinds = kinds
            .iter()
            .map(|k| match k {
                ClassicalArg::Linear => ClassicalKernelKind::Linear,
                ClassicalArg::Poly => ClassicalKernelKind::Poly,
                ClassicalArg::Rbf => ClassicalKernelKind::Rbf,
            })
            .collect();
    }
    set(&mut grid.c, args.c_grid.clone());
    set(&mut grid.gamma, args.gamma_grid.clone());
    let outcome = classical_baseline(&data.train, &data.test, &grid, args.cv_folds, args.seed)?;
    fs::create_dir_all(&args.out)?;
    write_results_csv(&args.out.join("results.csv"), std::slice::from_ref(&outcome.row))?;
    fs::write(args.out.join("baseline.json"), serde_json::to_string_pretty(&outcome)?)?;
    print_rows(std::slice::from_ref(&outcome.row));
    println!(
        "selected {} (gamma {}, degree {}), C {}",
        outcome.kernel.kind.label(),
        outcome.kernel.gamma,
        outcome.kernel.degree,
        outcome.c
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Baseline(a) => baseline(a),
    }
}
