mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Partition estimates from posterior similarity matrices.
#[derive(Debug, Parser)]
#[command(name = "nmfpart", version, about)]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism. Results do
    /// not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the posterior similarity matrix from label draws.
    Psm(PsmArgs),
    /// Factorize a similarity matrix at one rank.
    Nmf(NmfArgs),
    /// Choose the rank whose hard partition minimizes a penalty.
    Select(SelectArgs),
    /// Dendrogram, Medvedovic or exhaustive estimators.
    Baseline(BaselineArgs),
    /// Rand, adjusted Rand and VI between two partitions.
    Evaluate(EvaluateArgs),
    /// Replicated Gaussian-mixture benchmark.
    Simulate(SimulateArgs),
    /// Per-iteration NMF timings on random similarity matrices.
    Timing(TimingArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct PsmArgs {
    /// CSV of label draws: one draw per row, one column per observation.
    #[arg(long)]
    pub labels: PathBuf,
    /// Skip the first row of the label file.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PsmInput {
    /// n x n similarity matrix CSV.
    #[arg(long)]
    pub psm: PathBuf,
    /// Largest asymmetry or out-of-range excess repaired on input.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// ls, kl, ns or offset.
    #[arg(long, default_value = "ls")]
    pub variant: String,
    /// Smoothing strength of the ns model.
    #[arg(long, default_value_t = nmfpart::nmf::DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long, default_value_t = nmfpart::selection::DEFAULT_STARTS)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct NmfArgs {
    #[command(flatten)]
    pub input: PsmInput,
    #[arg(long)]
    pub rank: usize,
    #[command(flatten)]
    pub fit: FitArgs,
    /// JSON with labels, soft matrix, objective, iterations and convergence.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: PsmInput,
    /// binder, dahl, pear or vi.
    #[arg(long, default_value = "binder")]
    pub loss: String,
    #[arg(long, default_value_t = nmfpart::selection::DEFAULT_K_MIN)]
    pub kmin: usize,
    #[arg(long, default_value_t = nmfpart::selection::DEFAULT_K_MAX)]
    pub kmax: usize,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Logarithm base for the vi loss: e or 2.
    #[arg(long, default_value = "e")]
    pub log_base: String,
    /// Selection report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Penalty curve CSV (k, penalty, clusters).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Hard labels CSV, one row of one-based labels.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Soft membership CSV, n rows by K columns.
    #[arg(long)]
    pub soft_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: PsmInput,
    /// minbinder, maxpear, minvi, medv or oracle.
    #[arg(long)]
    pub method: String,
    /// average or complete.
    #[arg(long, default_value = "average")]
    pub linkage: String,
    /// Similarity cut for medv.
    #[arg(long, default_value_t = nmfpart::baselines::DEFAULT_MEDVEDOVIC_CUT)]
    pub cut: f64,
    /// Loss minimized by the oracle.
    #[arg(long, default_value = "binder")]
    pub loss: String,
    /// Hard labels CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Label CSV of the estimate; the first row is used.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Label CSV of the reference partition; the first row is used.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub header: bool,
    /// e or 2.
    #[arg(long, default_value = "e")]
    pub log_base: String,
    /// Scores JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One or more of TTT, TTF, TFT, TFF, FTT, FTF, FFT, FFF.
    #[arg(long, value_delimiter = ',', default_value = "TTT")]
    pub config: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 500)]
    pub burnin: usize,
    #[arg(long, default_value_t = 2000)]
    pub kept: usize,
    #[arg(long, default_value_t = 8)]
    pub components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimators to score; defaults to the four NMF models, MinBinder,
    /// MaxPEAR, MinVI and Medvedovic.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = nmfpart::selection::DEFAULT_STARTS)]
    pub starts: usize,
    #[arg(long, default_value_t = nmfpart::selection::DEFAULT_K_MIN)]
    pub kmin: usize,
    #[arg(long, default_value_t = nmfpart::selection::DEFAULT_K_MAX)]
    pub kmax: usize,
    /// Keep a random subset of this many observations per data set.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Directory receiving benchmark.csv, kdist.csv and records.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub ranks: Vec<usize>,
    #[arg(long, default_value = "ls")]
    pub variant: String,
    #[arg(long, default_value_t = nmfpart::nmf::DEFAULT_THETA)]
    pub theta: f64,
    /// Update steps per cell.
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    /// Runs per cell; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Exit status of a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Outputs were written but some factorization hit its iteration cap.
    NotConverged,
}

/// Input or validation problems exit with 2; anything else with 1.
#[derive(Debug)]
pub struct InputError(pub anyhow::Error);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for InputError {}

pub fn run_args<I, T>(args: I) -> anyhow::Result<Status>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(std::iter::once(OsString::from("nmfpart")).chain(args.iter().cloned()))?;
    if let Some(n) = cli.threads {
        // a replay may find the pool already configured
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let recorded: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    commands::dispatch(cli.command, recorded)
}

fn main() -> ExitCode {
    match run_args(std::env::args_os().skip(1)) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: a factorization stopped at its iteration cap before converging");
            ExitCode::from(3)
        }
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return ExitCode::from(if clap_err.use_stderr() { 2 } else { 0 });
            }
            eprintln!("error: {err:#}");
            let input = err.downcast_ref::<InputError>().is_some()
                || err.downcast_ref::<nmfpart::Error>().is_some();
            ExitCode::from(if input { 2 } else { 1 })
        }
    }
}
