use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use concept_parse::protocol::MetricKind;
use concept_parse::tensor::Precision;

#[derive(Debug, Parser)]
#[command(
    name = "concept-parse",
    version,
    about = "Zero- and few-shot semantic parsing over natural-language concept descriptions",
    after_help = "Exit codes: 0 ok, 2 configuration error, 3 data error, 4 incompatible checkpoint.\n\
                  Logging: CONCEPT_PARSE_LOG=error|info|debug (default info)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Concept pretraining on WikiWiki-style JSON lines; writes a checkpoint.
    Pretrain(PretrainArgs),
    /// Zero-shot protocol: train on known domains, evaluate the held-out one.
    Train(TrainArgs),
    /// Few-shot protocol: fine-tune a checkpoint on k samples per intent/slot.
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint on a held-out domain's test records.
    Eval(EvalArgs),
    /// Aggregate run manifests into a variants x domains table.
    Report(ReportArgs),
    /// Decode one utterance and show the top candidates at every step.
    Inspect(InspectArgs),
}

/// Flags every experiment command shares.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML file with [model], [training], [split] and [protocol] sections.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "runs")]
    pub out: PathBuf,
    /// Seed for data splits, pretraining and shuffling.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "single|double")]
    pub precision: Option<Precision>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// A .jsonl[.gz] file or a directory of them.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
}

/// Flags of commands that run a protocol on a corpus.
#[derive(Debug, Args)]
pub struct Experiment {
    #[command(flatten)]
    pub common: Common,
    /// A TSV file, or a directory of *train* / *test* TSV files.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Domain to hold out.
    #[arg(long, value_name = "NAME")]
    pub hold_out: String,
    /// Comma-separated run seeds.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Beam width; 1 decodes greedily. Defaults to the config value (4).
    #[arg(long, value_name = "B")]
    pub beam: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub exp: Experiment,
    /// Skip concept pretraining.
    #[arg(long)]
    pub no_pretrain: bool,
    /// Pretrain from scratch on this WikiWiki corpus before training.
    #[arg(long, value_name = "PATH", conflicts_with = "init")]
    pub wiki: Option<PathBuf>,
    /// Start from a checkpoint written by `pretrain`.
    #[arg(long, value_name = "CKPT")]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub exp: Experiment,
    /// Samples per intent/slot.
    #[arg(long, value_name = "K")]
    pub spi: Option<usize>,
    /// Checkpoint to fine-tune, usually one written by `train`.
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Record the base checkpoint as not pretrained.
    #[arg(long)]
    pub no_pretrain: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub exp: Experiment,
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Manifest files, or directories searched for them.
    #[arg(required = true, value_name = "PATH")]
    pub manifests: Vec<PathBuf>,
    /// Metric to tabulate; by default the manifests' shared headline metric.
    #[arg(long, value_name = "em|f1")]
    pub metric: Option<MetricKind>,
    /// Also write table.csv and table.txt here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Utterance to parse.
    #[arg(long)]
    pub utterance: String,
    /// Comma-separated labels such as IN:GET_WEATHER,SL:LOCATION. Defaults to
    /// the checkpoint's own concepts.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long, value_name = "B", default_value_t = 4)]
    pub beam: usize,
    /// Candidates shown per step.
    #[arg(long, value_name = "K", default_value_t = 5)]
    pub top: usize,
}
