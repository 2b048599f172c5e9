//! Command-line driver for the ontorel pipeline.
//!
//! Every command writes a `<output>.manifest.json` next to its primary output
//! and skips itself when that manifest still matches its configuration,
//! inputs and outputs. `--force` reruns regardless.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::input(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message, keeping the exit code.
    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ontorel::Error> for CliError {
    fn from(e: ontorel::Error) -> Self {
        use ontorel::Error as E;
        let code = match &e {
            E::Io { .. }
            | E::Parse(_)
            | E::TooManyErrors { .. }
            | E::Format { .. }
            | E::MissingEmbedding(_)
            | E::Invalid(_) => EXIT_INPUT,
            E::Shape(_) | E::Config(_) => EXIT_CONFIG,
            E::NonFinite { .. } => EXIT_INTERNAL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ontorel", version, about = "Ontology relation extraction and prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Rerun even when the outputs and manifest are up to date.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest an N-Triples ontology and write the saturated relation matrix.
    Materialize(MaterializeArgs),
    /// Print the per-relation count table of a matrix file.
    Counts(CountsArgs),
    /// Export entity texts for an embedding provider.
    RenderText(RenderTextArgs),
    /// Hash-based stand-in embeddings from an entity text file.
    PseudoEmbed(PseudoEmbedArgs),
    /// Split entities and write train/validation pair datasets.
    BuildDataset(BuildDatasetArgs),
    /// Train a relation network on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Evaluate every model on every validation set.
    CrossEval(CrossEvalArgs),
    /// Run the full chain from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct MaterializeArgs {
    #[arg(long)]
    pub ontology: PathBuf,
    #[arg(long)]
    pub out_index: PathBuf,
    #[arg(long)]
    pub out_matrix: PathBuf,
    /// Count table path; defaults to the matrix path with `.counts.tsv`.
    #[arg(long)]
    pub out_counts: Option<PathBuf>,
    /// Malformed lines tolerated before the read fails.
    #[arg(long, default_value_t = 1000)]
    pub error_cap: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CountsArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderTextArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PseudoEmbedArgs {
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Materialized matrix; a stated-only matrix is saturated first.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_val: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-relation example cap.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Source tag; defaults to the index file stem.
    #[arg(long)]
    pub source: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Overrides the embedding file named in the dataset.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Comma-separated hidden layer sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,100,100")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss trace (TSV).
    #[arg(long)]
    pub loss_trace: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Writes `report.csv`, `report.md` and `scores.jsonl` here.
    #[arg(long)]
    pub out: PathBuf,
    /// Model tag in the report; defaults to the checkpoint file stem.
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long = "macro")]
    pub macro_average: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CrossEvalArgs {
    /// `tag=checkpoint` pairs, comma-separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    /// Validation dataset files, comma-separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub valsets: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "macro")]
    pub macro_average: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Materialize(a) => commands::materialize(&a),
        Command::Counts(a) => commands::counts(&a),
        Command::RenderText(a) => commands::render_text(&a),
        Command::PseudoEmbed(a) => commands::pseudo_embed(&a),
        Command::BuildDataset(a) => commands::build_dataset(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::CrossEval(a) => commands::cross_eval(&a),
        Command::Pipeline(a) => pipeline::run(&a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let io = ontorel::Error::Io {
            path: "x".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        };
        assert_eq!(CliError::from(io).code, EXIT_INPUT);
        assert_eq!(CliError::from(ontorel::Error::Shape("a".into())).code, EXIT_CONFIG);
        assert_eq!(CliError::from(ontorel::Error::Config("a".into())).code, EXIT_CONFIG);
        let nf = ontorel::Error::NonFinite {
            what: "loss",
            epoch: 0,
            batch: 0,
        };
        assert_eq!(CliError::from(nf).code, EXIT_INTERNAL);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn list_flags_split_on_commas() {
        let cli = Cli::try_parse_from([
            "ontorel",
            "cross-eval",
            "--models",
            "a=x.json,b=y.json",
            "--valsets",
            "v1,v2",
            "--out",
            "o",
        ])
        .unwrap();
        let Command::CrossEval(a) = cli.command else { panic!() };
        assert_eq!(a.models, ["a=x.json", "b=y.json"]);
        assert_eq!(a.valsets.len(), 2);
    }
}
