use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use termvar::generator::GenerateError;

mod commands;
mod publish;

/// Expand a term lexicon with rewrite rules, tag a corpus with it and
/// analyze how the terms are used.
#[derive(Parser, Debug)]
#[command(name = "termvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate candidate terms from a seed dictionary and a rules file
    Expand(ExpandArgs),
    /// Tag a corpus and keep the attested dictionary terms
    Tag(TagArgs),
    /// Frequency, coverage, redundancy and weekly statistics
    Analyze(AnalyzeArgs),
    /// Overlap of three dictionaries' attested terms
    Compare(CompareArgs),
    /// Context samples for newly attested generated terms
    Review(ReviewArgs),
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    /// Seed dictionary (TSV)
    #[arg(long)]
    pub dict: PathBuf,
    /// Rules file (TSV)
    #[arg(long)]
    pub rules: PathBuf,
    /// Output directory; receives candidates.tsv
    #[arg(long)]
    pub out: PathBuf,
    /// Override max_candidates
    #[arg(long)]
    pub max_candidates: Option<usize>,
    /// Override max_term_tokens
    #[arg(long)]
    pub max_term_tokens: Option<usize>,
    /// Override max_rule_applications_per_derivation
    #[arg(long)]
    pub max_rule_applications: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TagArgs {
    /// Dictionary to tag with (TSV)
    #[arg(long)]
    pub dict: PathBuf,
    /// Corpus (JSON Lines)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory; receives mentions.tsv and attested.tsv
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of available cores
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DenominatorArg {
    Entity,
    All,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Corpus (JSON Lines)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Mentions file; defaults to OUT/mentions.tsv
    #[arg(long)]
    pub mentions: Option<PathBuf>,
    /// Output directory for the CSV files
    #[arg(long)]
    pub out: PathBuf,
    /// Coverage fractions
    #[arg(long, value_delimiter = ',', default_value = "0.99,0.995")]
    pub p: Vec<f64>,
    /// Size of the common-term list for the weekly share (also reported @1)
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Articles the weekly share is a fraction of
    #[arg(long, value_enum, default_value_t = DenominatorArg::Entity)]
    pub denominator: DenominatorArg,
    /// Canonical term per entity as ENTITY=SURFACE; defaults to the most frequent term
    #[arg(long)]
    pub canonical: Vec<String>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Exactly three dictionaries; the file stem names each one
    #[arg(long)]
    pub dict: Vec<PathBuf>,
    /// Mentions file; defaults to OUT/mentions.tsv
    #[arg(long)]
    pub mentions: Option<PathBuf>,
    /// Output directory; receives venn.csv and venn_terms.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReviewArgs {
    /// Candidate dictionary with provenance (TSV)
    #[arg(long)]
    pub dict: PathBuf,
    /// Corpus (JSON Lines)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Mentions file; defaults to OUT/mentions.tsv
    #[arg(long)]
    pub mentions: Option<PathBuf>,
    /// Output directory; receives review.txt
    #[arg(long)]
    pub out: PathBuf,
    /// Snippets per term
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Sampling seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only review this term
    #[arg(long)]
    pub term: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Expand(args) => commands::expand(args),
        Command::Tag(args) => commands::tag(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Compare(args) => commands::compare(args),
        Command::Review(args) => commands::review(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<GenerateError>()
                .is_some_and(|g| matches!(g, GenerateError::Capacity { .. }))
            {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
