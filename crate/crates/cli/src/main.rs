use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridrisk_cli::{run, CliError, PipelineConfig, Stage};

/// Multilayer-graph predictive maintenance and resilience clustering for
/// substation outage data. Stages hand off through files in the work directory.
#[derive(Debug, Parser)]
#[command(name = "gridrisk", version)]
struct Args {
    /// TOML pipeline config; built-in defaults when omitted. Unknown keys are rejected.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Directory for all artifacts (overrides `paths.work_dir`).
    #[arg(short, long, global = true)]
    work_dir: Option<PathBuf>,

    /// Directory with incidents.csv, substations.csv, lines.csv and feeders.csv
    /// (overrides `paths.input_dir`; defaults to `<work_dir>/scenario`).
    #[arg(short, long, global = true)]
    input_dir: Option<PathBuf>,

    /// Global seed (overrides the config file and GRIDRISK_SEED).
    #[arg(short, long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario with planted ground truth.
    Synth,
    /// Clean incidents, resolve names and lines, impute voltages.
    Ingest,
    /// Build the spatial, temporal and causal layers and node features.
    BuildGraph,
    /// Compute maintenance labels for every selected window.
    Label,
    /// Cross-validate the multilayer GNN per window.
    Train,
    /// Compare the full model with each single-layer variant.
    Ablate,
    /// Random forest, gradient boosting, k-means and spectral baselines.
    Baselines,
    /// Train the risk-aware embedding model.
    Embed,
    /// Reduce, cluster, validate and profile the embeddings.
    Cluster,
    /// Aggregate all artifacts into report.json and report.md.
    Report,
}

impl Command {
    fn stage(&self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Ingest => Stage::Ingest,
            Command::BuildGraph => Stage::BuildGraph,
            Command::Label => Stage::Label,
            Command::Train => Stage::Train,
            Command::Ablate => Stage::Ablate,
            Command::Baselines => Stage::Baselines,
            Command::Embed => Stage::Embed,
            Command::Cluster => Stage::Cluster,
            Command::Report => Stage::Report,
        }
    }
}

fn effective_config(args: &Args) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    }
    .with_env()?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = &args.work_dir {
        cfg.paths.work_dir = d.clone();
    }
    if let Some(d) = &args.input_dir {
        cfg.paths.input_dir = Some(d.clone());
    }
    cfg.finalize()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = effective_config(&args).and_then(|cfg| run(args.command.stage(), &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
