use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "localdiff", version, about = "Local and global solvers for graph diffusion equations")]
pub struct Cli {
    /// Worker threads. Values above 1 run sources concurrently and
    /// parallelize Jacobi-type sweeps; results are identical to 1.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one diffusion equation from one source.
    Solve(SolveArgs),
    /// Compare global solvers with their local counterparts over sampled sources.
    Bench(BenchArgs),
    /// Maintain a PPR vector over a stream of edge-event batches.
    Dynamic(DynamicArgs),
    /// Participation ratios of diffusion vectors.
    Pratio(PratioArgs),
    /// Write synthetic graphs or event streams.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Ppr,
    Katz,
    Hk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Edge list: two node tokens per line, `#` comments.
    #[arg(long)]
    pub graph: PathBuf,

    #[arg(long, value_enum, default_value = "ppr")]
    pub problem: ProblemArg,

    /// Teleport (PPR) or attenuation (Katz) parameter. Defaults: 0.1 for
    /// PPR, 1/(‖A‖₂+1) for Katz.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Heat-kernel temperature.
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// gs, sor, gd, ch, local-gs, local-sor, local-gd or local-ch.
    #[arg(long, default_value = "local-gs")]
    pub method: String,

    /// Precision: a number, or `1/n`, `1/m`, `1/sqrt n` (any numerator).
    #[arg(long)]
    pub eps: String,

    /// SOR relaxation, or `auto` for the PPR optimum.
    #[arg(long, default_value = "1")]
    pub omega: String,

    /// Source node label as it appears in the edge list.
    #[arg(long)]
    pub source: String,

    #[arg(long)]
    pub max_sweeps: Option<usize>,

    /// Number of largest estimate entries to include in the report.
    #[arg(long, default_value_t = 10)]
    pub top: usize,

    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// Comma-separated methods; defaults to every method valid for the problem.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,

    #[arg(long)]
    pub eps: String,

    #[arg(long, default_value = "1")]
    pub omega: String,

    /// Comma-separated source labels; overrides sampling.
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<String>,

    #[arg(long, default_value_t = 50)]
    pub num_sources: usize,

    /// Seed for source sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub max_sweeps: Option<usize>,

    /// Record wall-clock times (makes output run-dependent).
    #[arg(long)]
    pub timing: bool,

    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DynamicArgs {
    #[arg(long)]
    pub graph: PathBuf,

    /// Events file: `I u v` / `D u v` per line, `---` between batches.
    #[arg(long)]
    pub events: PathBuf,

    #[arg(long)]
    pub source: String,

    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,

    #[arg(long)]
    pub eps: String,

    #[arg(long, default_value = "1")]
    pub omega: String,

    /// Also run from-scratch solves on every snapshot.
    #[arg(long)]
    pub compare: bool,

    /// Record `max |r - (s - Q p)|` at every snapshot.
    #[arg(long)]
    pub check_consistency: bool,

    #[arg(long)]
    pub max_sweeps: Option<usize>,

    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VectorArg {
    /// Solve for each sampled source.
    Solve,
    /// A standard basis vector.
    Basis,
    /// The all-equal vector.
    Uniform,
}

#[derive(Debug, Clone, Args)]
pub struct PratioArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[arg(long, default_value = "local-gs")]
    pub method: String,

    #[arg(long, default_value = "1e-10/m")]
    pub eps: String,

    #[arg(long, value_enum, default_value = "solve")]
    pub vector: VectorArg,

    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<String>,

    #[arg(long, default_value_t = 50)]
    pub num_sources: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub max_sweeps: Option<usize>,

    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Erdős–Rényi G(n, p).
    Er,
    /// Chung–Lu with a power-law expected degree sequence.
    ChungLu,
    /// Random insert/delete batches for an existing graph.
    Events,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,

    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    /// Edge probability for `er`.
    #[arg(long, default_value_t = 0.01)]
    pub p: f64,

    /// Average degree for `chung-lu`.
    #[arg(long, default_value_t = 10.0)]
    pub avg_degree: f64,

    /// Power-law exponent for `chung-lu`.
    #[arg(long, default_value_t = 2.5)]
    pub exponent: f64,

    /// Input graph for `events`.
    #[arg(long)]
    pub graph: Option<PathBuf>,

    #[arg(long, default_value_t = 10)]
    pub batches: usize,

    #[arg(long, default_value_t = 20)]
    pub per_batch: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub output: Option<PathBuf>,
}
