use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "shortcut", version, about = "Mine and audit matching-based shortcuts in labeled text datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine the shortcut hierarchy of a dataset and write it as an artifact
    Mine(MineArgs),
    /// Merge semantically similar sibling shortcuts of an artifact
    Aggregate(AggregateArgs),
    /// Compare model accuracy on instances covered and not covered by a group of shortcuts
    Whatif(WhatIfArgs),
    /// Remove the instances covered by a group of shortcuts and re-mine
    Remove(RemoveArgs),
    /// Dump the shortcut table of an artifact
    Export(ExportArgs),
    /// Serve every dataset in a directory over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Thresholds {
    /// Minimum number of covered instances
    #[arg(long, default_value_t = 10)]
    pub min_coverage: usize,
    /// Minimum share of covered instances carrying the majority label
    #[arg(long, default_value_t = 0.75)]
    pub min_productivity: f64,
    /// Largest number of tokens between the two slots of a template
    #[arg(long)]
    pub max_gap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Pre-annotated dataset (JSON lines)
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub thresholds: Thresholds,
    /// Children of selected shortcuts below this coverage are left out
    #[arg(long, default_value_t = 2)]
    pub child_min_coverage: usize,
    /// Match words case-insensitively
    #[arg(long)]
    pub case_fold: bool,
    /// Artifact to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Word vectors, one `word<TAB>v1 v2 ...` line per word
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Cosine-distance cut of the complete-linkage dendrogram
    #[arg(long, default_value_t = shortcut_core::aggregate::DEFAULT_CUT)]
    pub cut: f64,
    /// Aggregated artifact to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct Selection {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model predictions (JSON lines of `{model, predictions}`)
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Shortcut id; repeat or separate with commas
    #[arg(long = "shortcut", value_delimiter = ',')]
    pub shortcuts: Vec<String>,
    /// Restrict the analysis to one split
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct WhatIfArgs {
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RemoveArgs {
    #[command(flatten)]
    pub selection: Selection,
    /// Directory receiving the derived dataset, its predictions and provenance
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// Defaults to the artifact's mining threshold
    #[arg(long)]
    pub min_coverage: Option<usize>,
    /// Defaults to the artifact's mining threshold
    #[arg(long)]
    pub min_productivity: Option<f64>,
    /// Only this split's statistics columns
    #[arg(long)]
    pub split: Option<String>,
    /// Written to standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: ExportFormat,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of `*.jsonl` datasets with their companion files
    #[arg(long, env = "SHORTCUT_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long, env = "SHORTCUT_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "SHORTCUT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 10)]
    pub default_min_coverage: usize,
    #[arg(long, default_value_t = 0.75)]
    pub default_min_productivity: f64,
    #[arg(long)]
    pub max_gap: Option<usize>,
}
