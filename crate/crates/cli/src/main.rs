use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use crag::config::AppConfig;
use crag::query::{run_query, QuerySession};
use crag::service::{self, AppState};
use crag::{stages, CliError};
use crag_core::pipeline::Method;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "crag", version, about = "Cluster, summarize and query product reviews")]
struct Cli {
    #[arg(long, global = true, default_value = "crag.toml")]
    config: PathBuf,
    /// Overrides the clustering seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Recompute even when inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the review CSV and group it by product.
    Ingest,
    /// Embed every review.
    Embed,
    /// Build knowledge documents.
    Build {
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
    /// Compare CRAG and RAG on every product.
    Evaluate {
        #[arg(long)]
        questions: PathBuf,
    },
    /// Ask questions from the terminal.
    Query {
        #[arg(long)]
        product: Option<String>,
        #[arg(long, value_parser = parse_method, default_value = "crag")]
        method: Method,
        #[arg(long)]
        model: Option<String>,
    },
    /// Run the HTTP service.
    Serve,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = AppConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.crag.clustering.seed = seed;
    }
    match cli.command {
        Command::Ingest => print_json(&stages::ingest(&config)?),
        Command::Embed => print_json(&stages::embed(&config, cli.force)?),
        Command::Build { method } => {
            let report = stages::build(&config, method, cli.force)?;
            eprintln!("{method}: rebuilt {}, unchanged {}", report.rebuilt, report.skipped);
            print_json(&report);
        }
        Command::Evaluate { questions } => {
            let questions = stages::read_questions(&questions)?;
            let (_, report) = stages::evaluate(&config, &questions)?;
            print!("{report}");
            eprintln!("report written to {}", config.paths.report.display());
        }
        Command::Query { product, method, model } => {
            let model = model.unwrap_or_else(|| config.qa_models[0].clone());
            let session = QuerySession { product, method, model };
            run_query(&config, session, io::stdin().lock(), io::stdout().lock())?;
        }
        Command::Serve => {
            let state = Arc::new(AppState::from_config(&config)?);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            runtime.block_on(service::serve(state.clone(), &config.service.bind))?;
            drop(runtime);
            drop(state);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
