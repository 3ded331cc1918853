//! `mlorder`: maximum-likelihood word generation order from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mlorder_core::lattice::{DEFAULT_MAX_WORDS, HARD_MAX_WORDS};

#[derive(Debug, Parser)]
#[command(name = "mlorder", version, about = "Maximum-likelihood word generation order for non-causal language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find the most likely generation order of one sentence.
    Order(OrderArgs),
    /// Run the optimal-vs-causal comparison over a corpus and write reports.
    Analyze(AnalyzeArgs),
    /// Check a corpus file: labels, ids and triplet completeness.
    Validate(ValidateArgs),
    /// Compare the lattice search with exhaustive search on random tables.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RemoteOptions {
    /// Requests coalesced per dispatch batch (remote scorers).
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    /// Upper bound on in-flight HTTP requests per scorer.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_concurrent: u64,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    /// Sentence text; split into words on whitespace.
    #[arg(long, conflicts_with = "id", required_unless_present = "id")]
    pub text: Option<String>,
    /// Sentence id to look up in --corpus.
    #[arg(long, requires = "corpus")]
    pub id: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Masked scorer: ref:uniform:<p>, ref:neighbor, table:<path> or remote:<url>.
    /// Defaults to remote:$MLORDER_MASKED_ENDPOINT.
    #[arg(long)]
    pub scorer: Option<String>,
    /// Optional causal scorer; when given, the causal log-probability is reported too.
    #[arg(long)]
    pub causal_scorer: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_WORDS, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(2..=HARD_MAX_WORDS as u64))]
    pub max_words: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    #[command(flatten)]
    pub remote: RemoteOptions,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Masked scorer. Defaults to remote:$MLORDER_MASKED_ENDPOINT.
    #[arg(long)]
    pub scorer: Option<String>,
    /// Causal scorer. Defaults to remote:$MLORDER_CAUSAL_ENDPOINT.
    #[arg(long)]
    pub causal_scorer: Option<String>,
    /// Histogram bins.
    #[arg(long, default_value_t = 20, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub bins: usize,
    /// Histogram range as `lo,hi`, or `auto` to bin each histogram over its data.
    #[arg(long, default_value = "-1,1")]
    pub hist_range: String,
    /// Worker threads; sentences are analyzed in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub workers: usize,
    /// Output directory for the report files.
    #[arg(long)]
    pub out: PathBuf,
    /// Accept corpora with incomplete triplets.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_WORDS, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(2..=HARD_MAX_WORDS as u64))]
    pub max_words: usize,
    #[command(flatten)]
    pub remote: RemoteOptions,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Largest sentence length to test (2..=8).
    #[arg(long, default_value_t = 6, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(2..=8))]
    pub max_n: usize,
    /// Random tables per sentence length.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Base seed for the random tables.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Order(args) => commands::order(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Validate(args) => commands::validate(args),
        Command::Selfcheck(args) => commands::selfcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("mlorder: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
