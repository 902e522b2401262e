//! `vidseek`: ingest, dedup, index build, batch search and serving.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vidseek_core::dedup::DEFAULT_DELTA;
use vidseek_core::filter::MatchMode;
use vidseek_core::fusion::{FusionMethod, Normalization};

#[derive(Debug, Parser)]
#[command(
    name = "vidseek",
    version,
    about = "Keyframe retrieval over multiple embedding spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a manifest and write a catalog directory.
    Ingest(IngestArgs),
    /// Remove near-duplicate keyframes within each video.
    Dedup(DedupArgs),
    /// Build and persist the index for one space.
    BuildIndex(BuildIndexArgs),
    /// Run one query and print ranked hits as JSON lines.
    Search(SearchArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Write a small seeded synthetic corpus with its manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DedupArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    space: String,
    #[arg(long, default_value_t = DEFAULT_DELTA, allow_negative_numbers = true)]
    delta: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IndexKind {
    Flat,
    Ivf,
    Ivfpq,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    space: String,
    #[arg(long, value_enum)]
    kind: IndexKind,
    /// Coarse cells (default: round(sqrt(rows))).
    #[arg(long)]
    nlist: Option<usize>,
    /// Cells probed per query when the request does not say.
    #[arg(long)]
    nprobe: Option<usize>,
    /// PQ subquantizers (default: largest divisor of dim not above dim/8).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FusionArg {
    Sum,
    Unique,
}

impl From<FusionArg> for FusionMethod {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Sum => Self::SumConfidence,
            FusionArg::Unique => Self::UniqueFrame,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormArg {
    None,
    #[value(alias = "minmax")]
    MinMax,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::None => Self::None,
            NormArg::MinMax => Self::MinMax,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatchArg {
    All,
    Any,
}

impl From<MatchArg> for MatchMode {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::All => Self::All,
            MatchArg::Any => Self::Any,
        }
    }
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    catalog: PathBuf,
    /// Comma-separated space ids (default: the spaces in --query-vec).
    #[arg(long, value_delimiter = ',')]
    spaces: Vec<String>,
    #[arg(long, value_enum, default_value_t = FusionArg::Sum)]
    fusion: FusionArg,
    #[arg(long, value_enum, default_value_t = NormArg::None)]
    normalization: NormArg,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    query_text: Option<String>,
    /// JSON file: a vector (one space) or an object of space id to vector.
    #[arg(long)]
    query_vec: Option<PathBuf>,
    /// Comma-separated object class ids.
    #[arg(long, value_delimiter = ',', conflicts_with = "classes_from_text")]
    object_classes: Option<Vec<u32>>,
    /// Extract object classes from --query-text.
    #[arg(long)]
    classes_from_text: bool,
    #[arg(long = "match", value_enum, default_value_t = MatchArg::All)]
    match_mode: MatchArg,
    #[arg(long)]
    include_deduped: bool,
    #[arg(long)]
    nprobe: Option<usize>,
    /// Service config file (embedders, nprobe, palette).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Human-readable table instead of JSON lines.
    #[arg(long)]
    pretty: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured bind address.
    #[arg(long)]
    bind: Option<std::net::SocketAddr>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Dedup(a) => commands::dedup(a),
        Command::BuildIndex(a) => commands::build_index(a),
        Command::Search(a) => commands::search(a),
        Command::Serve(a) => commands::serve(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
