//! `grand` command-line tool: release, simulate, eval and bench.

pub mod bench;
pub mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use bench::{BenchConfig, BenchOutput};

/// Exit status for invalid arguments or configuration.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when a pipeline stage fails.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] grand::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Pipeline(grand::Error::InvalidArgument(_)) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "grand", version, about = "Node-private release of network data")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "GRAND_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Release a privatized copy of part of a network.
    Release(ReleaseArgs),
    /// Generate a synthetic network and its true latent positions.
    Simulate(SimulateArgs),
    /// Compare local-statistic distributions of two networks.
    Eval(EvalArgs),
    /// Run a replication grid described by a TOML file.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Whitespace,
    Csv,
}

impl From<InputFormat> for grand::graph::EdgeListFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Whitespace => grand::graph::EdgeListFormat::Whitespace,
            InputFormat::Csv => grand::graph::EdgeListFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    InnerProduct,
    Rdpg,
}

impl From<ModelArg> for grand::ModelVariant {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::InnerProduct => grand::ModelVariant::InnerProduct,
            ModelArg::Rdpg => grand::ModelVariant::Rdpg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Grand,
    Laplace,
    Hat,
}

impl From<MethodArg> for grand::release::Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Grand => grand::release::Method::Grand,
            MethodArg::Laplace => grand::release::Method::Laplace,
            MethodArg::Hat => grand::release::Method::Hat,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReleaseArgs {
    /// Edge list to release from.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "whitespace")]
    pub format: InputFormat,
    /// Privacy budget; must be positive.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "inner-product")]
    pub model: ModelArg,
    /// Latent dimension.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Fraction of nodes released; the rest form the hold-out block.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub release_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "grand")]
    pub method: MethodArg,
    /// Output directory; receives `release.edges` and `manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    /// Inner-product model with truncated Gaussian-mixture latents.
    Lsm,
    /// Dot-product graph with uniform latents.
    Rdpg,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub generator: GeneratorArg,
    /// Release-block size.
    #[arg(long)]
    pub n: usize,
    /// Hold-out-block size; the network has `n + m` nodes.
    #[arg(long, default_value_t = 0)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Target edge density.
    #[arg(long, allow_negative_numbers = true)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives `graph.edges`, `latents.csv` and `simulation.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub release: PathBuf,
    #[arg(long, value_enum, default_value = "whitespace")]
    pub format: InputFormat,
    /// Statistics compared on the `ln(1 + x)` scale: a comma-separated
    /// subset of degree, vshape, triangle, eigen_centrality,
    /// harmonic_centrality, or `none`.
    #[arg(long, default_value = "degree,vshape,triangle")]
    pub log_stats: String,
    /// Directory for `distances.json` and the per-node CSVs. Without it the
    /// distances are printed as JSON on stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// TOML grid description.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; receives `table.csv` and `replications.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses a `--log-stats` value into per-statistic flags.
pub fn parse_log_stats(spec: &str) -> CliResult<grand::metrics::LogFlags> {
    use grand::metrics::Statistic;
    let mut flags = grand::metrics::LogFlags {
        degree: false,
        vshape: false,
        triangle: false,
        eigen_centrality: false,
        harmonic_centrality: false,
    };
    let spec = spec.trim();
    if spec.is_empty() || spec == "none" {
        return Ok(flags);
    }
    for name in spec.split(',') {
        let stat: Statistic = name.trim().parse().map_err(|e: grand::Error| CliError::Usage(e.to_string()))?;
        match stat {
            Statistic::Degree => flags.degree = true,
            Statistic::Vshape => flags.vshape = true,
            Statistic::Triangle => flags.triangle = true,
            Statistic::EigenCentrality => flags.eigen_centrality = true,
            Statistic::HarmonicCentrality => flags.harmonic_centrality = true,
        }
    }
    Ok(flags)
}

/// Runs a parsed command line, using a pool of `--jobs` threads when given.
pub fn run(cli: Cli) -> CliResult<()> {
    let Cli { jobs, command } = cli;
    let body = move || match command {
        Command::Release(args) => commands::release(&args).map(|_| ()),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Eval(args) => commands::eval(&args).map(|_| ()),
        Command::Bench(args) => bench::run_bench_command(&args),
    };
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Failed(format!("cannot start thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}
