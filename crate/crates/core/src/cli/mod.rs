//! Argument parsing, error classification and dispatch.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rxnemb::cluster::{InterGroup, Metric};
use rxnemb::encoder::JkMode;

pub use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "rxnemb", version, about = "Reaction embeddings: pretrain, embed, cluster, project, attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the encoder on real vs fictitious reactions.
    Pretrain(PretrainArgs),
    /// Embed every reaction of a JSON-lines file.
    Embed(EmbedArgs),
    /// Kennard-Stone clustering of an embedding file, with a heatmap.
    Cluster(ClusterArgs),
    /// 2-D projection of one or more embedding files, with a scatter plot.
    Project(ProjectArgs),
    /// Attention weights of a single reaction.
    Attn(AttnArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum JkArg {
    Concat,
    Last,
}

impl From<JkArg> for JkMode {
    fn from(j: JkArg) -> Self {
        match j {
            JkArg::Concat => JkMode::ConcatProject,
            JkArg::Last => JkMode::Last,
        }
    }
}

/// Flags shared with the config file; set values win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Global seed; also drives the training split and layout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(skip)]
    pub jk: Option<JkArg>,
    #[arg(skip)]
    pub metric: Option<Metric>,
    #[arg(skip)]
    pub k: Option<usize>,
    #[arg(skip)]
    pub inter_group: Option<InterGroup>,
    #[arg(skip)]
    pub n_neighbors: Option<usize>,
    #[arg(skip)]
    pub min_dist: Option<f64>,
    #[arg(skip)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Generate N template reactions instead of reading a corpus.
    #[arg(long, value_name = "N", conflicts_with = "corpus")]
    pub synth: Option<usize>,
    /// Labelled corpus as JSON lines.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Pipeline config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub jk: Option<JkArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Checkpoint written by `pretrain`.
    #[arg(long)]
    pub model: PathBuf,
    /// Reactions as JSON lines with `id` and `rxn_smiles`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// euclidean | cosine
    #[arg(long)]
    pub metric: Option<Metric>,
    /// mean | average_pairwise | medoid
    #[arg(long)]
    pub inter_group: Option<InterGroup>,
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// `TAG=PATH` per embedding file; repeat for several datasets.
    #[arg(long, required = true, value_parser = parse_tagged)]
    pub input: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_neighbors: Option<usize>,
    #[arg(long)]
    pub min_dist: Option<f64>,
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Reaction SMILES.
    #[arg(long)]
    pub rxn: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_tagged(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((tag, path)) if !tag.is_empty() && !path.is_empty() => Ok((tag.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected TAG=PATH, got {s:?}")),
    }
}

/// Marks errors the user can fix by changing arguments or configuration
/// (exit code 2). Everything else is a data error (exit code 3).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<UsageError>()) {
        2
    } else {
        3
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RXNEMB_THREADS") {
        let n: usize = v.parse().map_err(|_| usage(format!("RXNEMB_THREADS={v:?} is not a count")))?;
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Embed(a) => commands::embed(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Project(a) => commands::project(a),
        Command::Attn(a) => commands::attn(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_inputs() {
        assert_eq!(parse_tagged("a=x/y.bin").unwrap(), ("a".to_string(), PathBuf::from("x/y.bin")));
        assert!(parse_tagged("=x").is_err());
        assert!(parse_tagged("novalue").is_err());
    }

    #[test]
    fn exit_codes_follow_the_marker() {
        assert_eq!(exit_code(&usage("bad flag")), 2);
        assert_eq!(exit_code(&usage("bad flag").context("while parsing")), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("corrupt file")), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
