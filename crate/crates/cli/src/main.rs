use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hqeval::pipeline::{BackendChoice, Overrides, Pipeline, PipelineError, RunConfig, Stage};
use tracing_subscriber::EnvFilter;

/// Housing-quality evaluation pipeline.
#[derive(Debug, Parser)]
#[command(name = "hqeval", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the config value.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Extraction backend: rule, llm or predictions:<path>.
    #[arg(long, global = true)]
    backend: Option<BackendChoice>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Parse, clean, deduplicate and date-filter platform exports.
    Ingest,
    /// Extract evaluation units with the selected backend.
    Extract,
    /// Build the indicator weight table.
    Weights,
    /// Assign entries to communities and score them.
    Score,
    /// Compare backends against the gold annotations.
    Evaluate,
    /// Write indicator tables, platform distributions and the score map.
    Report,
    /// Run every stage in order.
    All,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        match self {
            Command::Ingest => Some(Stage::Ingest),
            Command::Extract => Some(Stage::Extract),
            Command::Weights => Some(Stage::Weights),
            Command::Score => Some(Stage::Score),
            Command::Evaluate => Some(Stage::Evaluate),
            Command::Report => Some(Stage::Report),
            Command::All => None,
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let path = cli.config.as_ref().ok_or_else(|| PipelineError::config("config", "--config <path> is required"))?;
    let mut config = RunConfig::load(path)?;
    let cwd = std::env::current_dir().unwrap_or_default();
    config.apply(&Overrides {
        output_dir: cli.output_dir.as_ref().map(|d| cwd.join(d)),
        backend: cli.backend.clone(),
        threads: cli.threads,
    });
    Ok(config)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = Cli::parse();

    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e, cli.output_dir.as_ref()),
    };
    let output_dir = config.output_dir.clone();
    let result = Pipeline::new(config).and_then(|p| match cli.command.stage() {
        Some(stage) => p.run(stage),
        None => p.run_all(),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, output_dir.as_ref()),
    }
}

fn fail(error: &PipelineError, output_dir: Option<&PathBuf>) -> ExitCode {
    eprintln!("error: {error}");
    println!("{}", error.to_json());
    if let Some(dir) = output_dir {
        Pipeline::write_error_report(dir, error);
    }
    ExitCode::from(error.exit_code() as u8)
}
