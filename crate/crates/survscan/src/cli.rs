//! Command-line front end.
//!
//! Exit codes: 0 success, 2 fit did not converge, 1 runtime failure,
//! 64 usage error, 65 bad input data.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use survscan_core::crossval::gamma_max;
use survscan_core::engine::Model;
use survscan_core::simgen::{simulate_cox, simulate_finegray, SimConfig};
use survscan_core::{
    bootstrap_interval, cross_validate, fit, ChunkPlan, CvConfig, FitConfig, PenaltySpec, SurvivalDataset,
};

use crate::io::{fingerprint, load_dense_csv, load_sparse_coo, write_sparse_coo, IoError};
use crate::report::{
    BenchBody, BenchRow, BenchSummary, BootstrapBody, CvBody, Document, FitBody, Manifest, SimulateBody,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

impl From<survscan_core::Error> for CliError {
    fn from(e: survscan_core::Error) -> Self {
        use survscan_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::InvalidColumn(_) => CliError::Usage(e.to_string()),
            E::Domain(_) | E::Index(_) | E::DuplicateEntry { .. } | E::LengthMismatch { .. } | E::DegenerateCurve { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Failure(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "survscan", version, about = "Scan-based Cox and Fine-Gray regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset in the sparse format with a true-coefficient sidecar.
    Simulate(SimulateArgs),
    /// Fit one model.
    Fit(FitArgs),
    /// Choose the penalty strength by repeated k-fold cross-validation.
    Cv(CvArgs),
    /// Percentile bootstrap interval for one coefficient.
    Bootstrap(BootstrapArgs),
    /// Time fits across sample sizes and thread counts.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Cox,
    Finegray,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Cox => Model::Cox,
            ModelArg::Finegray => Model::FineGray,
        }
    }
}

impl ModelArg {
    fn name(self) -> &'static str {
        match self {
            ModelArg::Cox => "cox",
            ModelArg::Finegray => "finegray",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyArg {
    None,
    L1,
    L2,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Dense CSV input.
    #[arg(long, conflicts_with_all = ["obs", "matrix"], required_unless_present = "obs")]
    pub data: Option<PathBuf>,
    /// Sparse observation file (`row_id,time,status`).
    #[arg(long, requires = "matrix")]
    pub obs: Option<PathBuf>,
    /// Sparse matrix file (`row_id,col_id,value`).
    #[arg(long, requires = "obs")]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
}

impl InputArgs {
    fn load(&self) -> Result<SurvivalDataset, CliError> {
        Ok(match (&self.data, &self.obs, &self.matrix) {
            (Some(d), _, _) => load_dense_csv(d, &self.time_col, &self.status_col)?,
            (None, Some(o), Some(m)) => load_sparse_coo(o, m)?,
            _ => return Err(CliError::Usage("give --data or both --obs and --matrix".into())),
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Cox)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = PenaltyArg::None)]
    pub penalty: PenaltyArg,
    /// γ for l1, τ for l2.
    #[arg(long)]
    pub strength: Option<f64>,
    /// Comma-separated column indices left unpenalized.
    #[arg(long, value_delimiter = ',')]
    pub exempt: Vec<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_cycles: usize,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "SURVSCAN_THREADS")]
    pub threads: Option<usize>,
    /// Scan chunk length; results depend on it, not on the thread count.
    #[arg(long, default_value_t = ChunkPlan::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ModelArgs {
    fn resolve(&mut self) {
        self.threads.get_or_insert_with(available_threads);
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or_else(available_threads)
    }

    fn fit_config(&self) -> Result<FitConfig, CliError> {
        if self.threads() == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        let config = FitConfig {
            tolerance: self.tol,
            max_cycles: self.max_cycles,
            plan: ChunkPlan::new(self.chunk_size, self.threads())?,
            ..FitConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    /// Penalty with the given strength; `None` requires `--strength` for
    /// penalized fits.
    fn penalty(&self, strength: Option<f64>) -> Result<PenaltySpec, CliError> {
        let need = |s: Option<f64>| s.ok_or_else(|| CliError::Usage("--strength is required with a penalty".into()));
        let spec = match self.penalty {
            PenaltyArg::None => PenaltySpec::none(),
            PenaltyArg::L1 => PenaltySpec::l1(need(strength)?),
            PenaltyArg::L2 => PenaltySpec::l2(need(strength)?),
        };
        Ok(spec.with_exempt(self.exempt.clone()))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Result file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// `auto` or a comma-separated ascending list.
    #[arg(long, default_value = "auto")]
    pub grid: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replicate_workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Index of the coefficient.
    #[arg(long)]
    pub coef: usize,
    #[arg(long, default_value_t = 100)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replicate_workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Cox)]
    pub model: ModelArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 0.05)]
    pub density: f64,
    #[arg(long, default_value_t = 0.8)]
    pub beta_sparsity: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_mix: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Administrative censoring at this quantile of the simulated times.
    #[arg(long)]
    pub censoring_quantile: Option<f64>,
    #[arg(long, env = "SURVSCAN_THREADS")]
    pub threads: Option<usize>,
    /// Directory receiving `obs.csv`, `matrix.csv` and `truth.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [100_000usize, 1_000_000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 0.05)]
    pub density: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Cox)]
    pub model: ModelArg,
    /// Thread counts to compare; defaults to 1 and all cores.
    #[arg(long, value_delimiter = ',')]
    pub threads: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 5)]
    pub max_cycles: usize,
    #[arg(long, default_value_t = ChunkPlan::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional result document in addition to the table on stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Failure(e.to_string()))?;
    Ok(pool.install(f))
}

struct Run {
    command: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl Run {
    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
        out
    }

    fn manifest(self, config: &impl Serialize, dataset: Option<&SurvivalDataset>) -> Manifest {
        Manifest {
            command: self.command,
            config: serde_json::to_value(config).expect("configs serialize"),
            dataset: dataset.map(fingerprint),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timings: self.timings,
        }
    }
}

fn exit_for(converged: bool) -> i32 {
    if converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn check_exempt(exempt: &[usize], p: usize) -> Result<(), CliError> {
    match exempt.iter().find(|&&j| j >= p) {
        Some(j) => Err(CliError::Usage(format!("--exempt column {j} out of range for {p} columns"))),
        None => Ok(()),
    }
}

fn cmd_fit(mut args: FitArgs, mut run: Run) -> Result<i32, CliError> {
    args.model.resolve();
    let config = args.model.fit_config()?;
    let penalty = args.model.penalty(args.model.strength)?;
    let ds = run.timed("load", || args.input.load())?;
    check_exempt(&args.model.exempt, ds.p())?;
    let model = Model::from(args.model.model);
    let res = with_pool(args.model.threads(), || fit(&ds, model, &penalty, &config))??;
    run.timings.insert("fit".into(), res.wall_time);
    run.timings.insert("grad_hess".into(), res.grad_hess_time);
    let body = FitBody::new(&res, ds.column_names());
    Document::new("fit", run.manifest(&args, Some(&ds)), body).write(args.out.as_deref())?;
    Ok(exit_for(res.converged))
}

fn parse_grid(raw: &str) -> Result<Option<Vec<f64>>, CliError> {
    if raw.trim() == "auto" {
        return Ok(None);
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad grid value {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn cmd_cv(mut args: CvArgs, mut run: Run) -> Result<i32, CliError> {
    args.model.resolve();
    let config = args.model.fit_config()?;
    if args.model.penalty == PenaltyArg::None {
        return Err(CliError::Usage("cross-validation needs --penalty l1 or l2".into()));
    }
    // The strength is a placeholder replaced by each grid value.
    let penalty = args.model.penalty(Some(args.model.strength.unwrap_or(1.0)))?;
    let cv = CvConfig {
        folds: args.folds,
        repetitions: args.reps,
        grid: parse_grid(&args.grid)?,
        seed: args.seed,
        parallel_replicates: args.replicate_workers,
    };
    let ds = run.timed("load", || args.input.load())?;
    check_exempt(&args.model.exempt, ds.p())?;
    let model = Model::from(args.model.model);
    let res = run.timed("cv", || {
        with_pool(args.model.threads(), || cross_validate(&ds, model, &penalty, &cv, &config))
    })??;
    let body = CvBody::new(&res, ds.column_names());
    Document::new("cv", run.manifest(&args, Some(&ds)), body).write(args.out.as_deref())?;
    Ok(exit_for(res.final_fit.converged))
}

fn cmd_bootstrap(mut args: BootstrapArgs, mut run: Run) -> Result<i32, CliError> {
    args.model.resolve();
    let config = args.model.fit_config()?;
    let penalty = args.model.penalty(args.model.strength)?;
    let ds = run.timed("load", || args.input.load())?;
    check_exempt(&args.model.exempt, ds.p())?;
    if args.coef >= ds.p() {
        return Err(CliError::Usage(format!("--coef {} out of range for {} columns", args.coef, ds.p())));
    }
    let model = Model::from(args.model.model);
    let threads = args.model.threads();
    let full = run.timed("fit", || with_pool(threads, || fit(&ds, model, &penalty, &config)))??;
    let interval = run.timed("bootstrap", || {
        with_pool(threads, || {
            bootstrap_interval(
                &ds,
                model,
                &penalty,
                &config,
                args.coef,
                args.resamples,
                args.seed,
                args.replicate_workers,
            )
        })
    })??;
    let body = BootstrapBody {
        coefficient: args.coef,
        name: ds.column_names()[args.coef].clone(),
        estimate: full.beta[args.coef],
        lower: interval.lower,
        upper: interval.upper,
        level: 0.95,
        resamples: args.resamples,
        failed: interval.failed,
    };
    Document::new("bootstrap", run.manifest(&args, Some(&ds)), body).write(args.out.as_deref())?;
    Ok(exit_for(full.converged))
}

fn check_unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn cmd_simulate(mut args: SimulateArgs, mut run: Run) -> Result<i32, CliError> {
    args.threads.get_or_insert_with(available_threads);
    if args.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    check_unit("--density", args.density)?;
    check_unit("--beta-sparsity", args.beta_sparsity)?;
    if !(args.p_mix > 0.0 && args.p_mix <= 1.0) {
        return Err(CliError::Usage("--p-mix must lie in (0, 1]".into()));
    }
    if let Some(q) = args.censoring_quantile {
        check_unit("--censoring-quantile", q)?;
    }
    let config = SimConfig {
        n: args.n,
        p: args.p,
        density: args.density,
        beta_sparsity: args.beta_sparsity,
        p_mix: args.p_mix,
        seed: args.seed,
        censoring_quantile: args.censoring_quantile,
        workers: args.threads.unwrap_or(1).max(1),
    };
    let (ds, beta, competing) = run.timed("simulate", || match args.model {
        ModelArg::Cox => {
            let s = simulate_cox(&config);
            (s.dataset, s.true_beta, None)
        }
        ModelArg::Finegray => {
            let s = simulate_finegray(&config);
            (s.dataset, s.beta1, Some(s.beta2))
        }
    });
    std::fs::create_dir_all(&args.out_dir).map_err(|source| IoError::Write {
        path: args.out_dir.clone(),
        source,
    })?;
    let obs = args.out_dir.join("obs.csv");
    let matrix = args.out_dir.join("matrix.csv");
    run.timed("write", || write_sparse_coo(&ds, &obs, &matrix))?;
    let body = SimulateBody {
        model: args.model.name().to_string(),
        rows: ds.n(),
        cols: ds.p(),
        nnz: ds.nnz(),
        n_events: ds.n_events(),
        n_competing: ds.n_competing(),
        obs_file: "obs.csv".into(),
        matrix_file: "matrix.csv".into(),
        true_beta: beta,
        true_beta_competing: competing,
    };
    let truth = args.out_dir.join("truth.json");
    Document::new("simulate", run.manifest(&args, Some(&ds)), body).write(Some(&truth))?;
    Ok(EXIT_OK)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn cmd_bench(mut args: BenchArgs, run: Run) -> Result<i32, CliError> {
    if args.threads.is_empty() {
        args.threads = vec![1, available_threads()];
        args.threads.dedup();
    }
    if args.reps == 0 || args.sizes.is_empty() || args.threads.contains(&0) || args.sizes.contains(&0) {
        return Err(CliError::Usage("--reps, --sizes and --threads must be positive".into()));
    }
    check_unit("--density", args.density)?;
    let model = Model::from(args.model);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    println!("{:>10} {:>8} {:>4} {:>12} {:>12} {:>7}", "n", "threads", "rep", "total_s", "grad_hess_s", "cycles");
    for &n in &args.sizes {
        let config = SimConfig {
            n,
            p: args.p,
            density: args.density,
            seed: args.seed,
            censoring_quantile: Some(0.8),
            workers: available_threads(),
            ..SimConfig::default()
        };
        let ds = match args.model {
            ModelArg::Cox => simulate_cox(&config).dataset,
            ModelArg::Finegray => simulate_finegray(&config).dataset,
        };
        // A penalty that keeps a handful of coefficients active.
        let gamma = 0.5 * gamma_max(&ds, model, &[], &FitConfig::default())?;
        let penalty = PenaltySpec::l1(gamma.max(f64::MIN_POSITIVE));
        let mut base = None;
        for &threads in &args.threads {
            let fit_config = FitConfig {
                max_cycles: args.max_cycles,
                plan: ChunkPlan::new(args.chunk_size, threads)?,
                ..FitConfig::default()
            };
            let (mut totals, mut grads) = (Vec::new(), Vec::new());
            for rep in 0..args.reps {
                let res = with_pool(threads, || fit(&ds, model, &penalty, &fit_config))??;
                println!(
                    "{n:>10} {threads:>8} {rep:>4} {:>12.6} {:>12.6} {:>7}",
                    res.wall_time, res.grad_hess_time, res.cycles
                );
                totals.push(res.wall_time);
                grads.push(res.grad_hess_time);
                rows.push(BenchRow {
                    n,
                    threads,
                    rep,
                    total_seconds: res.wall_time,
                    grad_hess_seconds: res.grad_hess_time,
                    cycles: res.cycles,
                });
            }
            let total = median(&mut totals);
            let first = *base.get_or_insert(total);
            summary.push(BenchSummary {
                n,
                threads,
                median_total_seconds: total,
                median_grad_hess_seconds: median(&mut grads),
                speedup: first / total,
            });
        }
    }
    println!();
    println!("{:>10} {:>8} {:>14} {:>14} {:>8}", "n", "threads", "median_total", "median_grad", "speedup");
    for s in &summary {
        println!(
            "{:>10} {:>8} {:>14.6} {:>14.6} {:>8.2}",
            s.n, s.threads, s.median_total_seconds, s.median_grad_hess_seconds, s.speedup
        );
    }
    if let Some(out) = args.out.clone() {
        let body = BenchBody {
            model: args.model.name().to_string(),
            cols: args.p,
            density: args.density,
            rows,
            summary,
        };
        Document::new("bench", run.manifest(&args, None), body).write(Some(&out))?;
    }
    Ok(EXIT_OK)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let run = Run {
        command: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        timings: BTreeMap::new(),
    };
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, run),
        Command::Fit(a) => cmd_fit(a, run),
        Command::Cv(a) => cmd_cv(a, run),
        Command::Bootstrap(a) => cmd_bootstrap(a, run),
        Command::Bench(a) => cmd_bench(a, run),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("survscan: {e}");
            e.exit_code()
        }
    }
}

/// Reads a result document from disk.
pub fn read_document<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Document<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
