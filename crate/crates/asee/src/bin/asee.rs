//! `asee`: the pipeline as subcommands over a shared JSON config.
//!
//! Exit codes: 0 success, 1 fatal error, 2 partial (outputs written with
//! some items degraded). Logging is controlled by the `ASEE_LOG` env var.

use asee::config::{load_config, PipelineConfig};
use asee::pipeline::{
    cmd_build_pool, cmd_consolidate, cmd_evaluate, cmd_export_sft, cmd_extract, cmd_retrieve,
    CommandOutcome,
};
use asee::retrieval::Strategy;
use asee::schema::DocumentMode;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "asee",
    about = "Schema-retrieval-augmented event extraction pipeline",
    version
)]
struct Cli {
    /// Pipeline config file (JSON, with ${VAR} env interpolation).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Validate the config and print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Paraphrase raw schemas into the retrieval pool.
    BuildPool,
    /// Merge near-duplicates, keep a diverse subset, prepare the corpus.
    Consolidate,
    /// Rank schemas for every sample and write rankings.
    Retrieve {
        /// Override retrieval.mode (raw | paraphrased).
        #[arg(long)]
        mode: Option<String>,
        /// Override retrieval.strategy
        /// (bm25 | dense | bm25_then_rerank | dense_then_rerank).
        #[arg(long)]
        strategy: Option<String>,
        /// Override paths.rankings for this run.
        #[arg(long)]
        rankings_out: Option<PathBuf>,
    },
    /// Extract events for every ranked sample.
    Extract,
    /// Compute Recall@K / extraction F1 / end-to-end F1 reports.
    Evaluate {
        /// Row label for the markdown comparison table.
        #[arg(long)]
        label: Option<String>,
    },
    /// Export (instruction, output) fine-tuning pairs for train samples.
    ExportSft,
}

fn parse_mode(s: &str) -> anyhow::Result<DocumentMode> {
    match s {
        "raw" => Ok(DocumentMode::Raw),
        "paraphrased" => Ok(DocumentMode::Paraphrased),
        other => anyhow::bail!("unknown mode {other:?} (expected raw | paraphrased)"),
    }
}

fn parse_strategy(s: &str) -> anyhow::Result<Strategy> {
    match s {
        "bm25" => Ok(Strategy::Bm25),
        "dense" => Ok(Strategy::Dense),
        "bm25_then_rerank" => Ok(Strategy::Bm25ThenRerank),
        "dense_then_rerank" => Ok(Strategy::DenseThenRerank),
        other => anyhow::bail!("unknown strategy {other:?}"),
    }
}

fn run(cli: Cli) -> anyhow::Result<CommandOutcome> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let mut config: PipelineConfig = load_config(config_path, cli.seed)?;

    match &cli.command {
        Command::BuildPool => cmd_build_pool(&config, cli.dry_run),
        Command::Consolidate => cmd_consolidate(&config, cli.dry_run),
        Command::Retrieve {
            mode,
            strategy,
            rankings_out,
        } => {
            if let Some(mode) = mode {
                config.retrieval.mode = parse_mode(mode)?;
            }
            if let Some(strategy) = strategy {
                config.retrieval.strategy = parse_strategy(strategy)?;
            }
            if let Some(out) = rankings_out {
                config.paths.rankings = Some(out.clone());
            }
            cmd_retrieve(&config, cli.dry_run)
        }
        Command::Extract => cmd_extract(&config, cli.dry_run),
        Command::Evaluate { label } => {
            if label.is_some() {
                config.evaluation.label = label.clone();
            }
            cmd_evaluate(&config, cli.dry_run)
        }
        Command::ExportSft => cmd_export_sft(&config, cli.dry_run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ASEE_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}
