//! Command-line front end for the `entstat` pipeline.
//!
//! Each subcommand loads its inputs, calls into the `entstat` library and
//! writes plain-text outputs to the output directory. Diagnostics go to the
//! log (stderr).

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<entstat::Error> for CliError {
    fn from(e: entstat::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "entstat", version, about = "Entity disambiguation, occurrence statistics and class-ratio estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Validate a knowledge-base directory and print a summary.
    Ingest,
    /// Generate a gold-labeled synthetic corpus (corpus.jsonl).
    Synth,
    /// Train local ranking weights on a gold-labeled corpus (weights.txt).
    Train,
    /// Disambiguate a corpus with the chosen solver (tagged.jsonl).
    Tag,
    /// Sense priors, entity bigrams and related entities
    /// (sense_priors.tsv, bigrams.tsv, related.tsv).
    Stats,
    /// Estimate class ratios of an unlabeled corpus (theta.tsv).
    Estimate,
    /// Compare the ratio estimator with label-and-collect (compare.tsv).
    Compare,
}

/// Command-line settings; each one overrides the config key of the same
/// name (dashes become underscores).
#[derive(Debug, Default, clap::Args)]
struct Flags {
    /// Knowledge-base directory.
    #[arg(long, global = true)]
    kb: Option<String>,
    /// Input corpus (train, tag, stats).
    #[arg(long, global = true)]
    corpus: Option<String>,
    /// Gold-labeled corpus (estimate, compare).
    #[arg(long, global = true)]
    labeled: Option<String>,
    /// Unlabeled corpus (estimate, compare).
    #[arg(long, global = true)]
    unlabeled: Option<String>,
    /// Weights file (tag, compare).
    #[arg(long, global = true)]
    weights: Option<String>,
    /// Sense groups as `group<TAB>entity_id` lines (stats).
    #[arg(long, global = true)]
    groups: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads for document-parallel stages.
    #[arg(long, global = true)]
    workers: Option<String>,
    /// Context window half-width in tokens.
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    learning_rate: Option<String>,
    #[arg(long, global = true)]
    margin: Option<String>,
    #[arg(long, global = true)]
    shuffle: Option<String>,
    /// local | hillclimb | lp
    #[arg(long, global = true)]
    solver: Option<String>,
    /// Tagger used by the label-and-collect baseline: local | hillclimb | lp
    #[arg(long, global = true)]
    baseline: Option<String>,
    /// Random restarts for hill climbing.
    #[arg(long, global = true)]
    restarts: Option<String>,
    /// Re-spot documents with the dictionary spotter before tagging.
    #[arg(long, global = true)]
    respot: Option<String>,
    /// Class ratio as `id=p,id=p,...` (synth).
    #[arg(long, global = true)]
    theta: Option<String>,
    /// Number of spots to generate (synth).
    #[arg(long, global = true)]
    n: Option<String>,
    /// Restrict estimation to these classes: `id,id,...`.
    #[arg(long, global = true)]
    classes: Option<String>,
    #[arg(long, global = true)]
    mmd_tolerance: Option<String>,
    #[arg(long, global = true)]
    mmd_iterations: Option<String>,
    /// Neighbour threshold on P(E|center) (stats).
    #[arg(long, global = true)]
    eps: Option<String>,
    #[arg(long, global = true)]
    damping: Option<String>,
    #[arg(long, global = true)]
    ppr_tolerance: Option<String>,
    #[arg(long, global = true)]
    ppr_iterations: Option<String>,
    /// Center entity for related-entity ranking (stats).
    #[arg(long, global = true)]
    center: Option<String>,
    /// Number of related entities to report (stats).
    #[arg(long, global = true)]
    top_k: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("kb", &self.kb),
            ("corpus", &self.corpus),
            ("labeled", &self.labeled),
            ("unlabeled", &self.unlabeled),
            ("weights", &self.weights),
            ("groups", &self.groups),
            ("out", &self.out),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("window", &self.window),
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("margin", &self.margin),
            ("shuffle", &self.shuffle),
            ("solver", &self.solver),
            ("baseline", &self.baseline),
            ("restarts", &self.restarts),
            ("respot", &self.respot),
            ("theta", &self.theta),
            ("n", &self.n),
            ("classes", &self.classes),
            ("mmd_tolerance", &self.mmd_tolerance),
            ("mmd_iterations", &self.mmd_iterations),
            ("eps", &self.eps),
            ("damping", &self.damping),
            ("ppr_tolerance", &self.ppr_tolerance),
            ("ppr_iterations", &self.ppr_iterations),
            ("center", &self.center),
            ("top_k", &self.top_k),
        ]
    }
}

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for (key, value) in cli.flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v.clone());
        }
    }
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Synth => commands::synth(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Tag => commands::tag(&cfg),
        Command::Stats => commands::stats(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Compare => commands::compare(&cfg),
    }
}
