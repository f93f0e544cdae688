//! `mediaprof`: every subcommand is a thin adapter over `mediaprof-core`.
//! Results go to stdout as JSON, progress to stderr. Failures print one
//! JSON error object on stderr and exit nonzero.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mediaprof_core::graph::Task;

#[derive(Parser, Debug)]
#[command(name = "mediaprof", version, about = "Interactive news-media profiling")]
pub struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ingest a dataset directory into a workspace
    Ingest {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Generate a planted synthetic dataset and its scripted LLM fixture
    GenSynth(GenSynthArgs),
    /// Train the graph model on the labeled Train sources
    Train(TrainArgs),
    /// Interactive validation sessions
    #[command(subcommand)]
    Session(SessionCommand),
    /// Non-interactive comparison runs
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Evaluate a workspace model on the test split
    Eval(EvalArgs),
    /// Write report, bookkeeping, communities and cohesion of a session
    ExportReport(ExportArgs),
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub communities: Option<usize>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub sources: Option<usize>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub source_sigma: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ModelFlags {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub model_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory or workspace
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Workspace to write; defaults to `--data`
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InteractorKind {
    /// Gold-label stand-in for a human
    Simulated,
    /// The LLM's grouping taken as the decision
    Llm,
}

/// Flags shared by every command that builds a session.
#[derive(Args, Debug, Default, Clone)]
pub struct SessionFlags {
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub communities_per_round: Option<usize>,
    /// train, dev, test or all
    #[arg(long)]
    pub population: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub fine_tune_epochs: Option<usize>,
    /// Scripted LLM fixture; defaults to the workspace fixture
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
pub enum SessionCommand {
    /// Create the session if needed and start a validation round
    Start {
        /// Workspace with a trained model; needed to create the session
        #[arg(long, value_name = "DIR")]
        work: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        #[command(flatten)]
        flags: SessionFlags,
    },
    /// Print status, counters and pending validations
    Status {
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
    },
    /// Apply a decision file: one decision object or an array of them
    Decide {
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        #[arg(long, value_name = "FILE")]
        decision: PathBuf,
    },
    /// Run expansion rounds for one community
    Expand {
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        #[arg(long)]
        community: u64,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
    },
    /// Fine-tune on the communities and evaluate
    Finalize {
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        #[arg(long, default_value = "interactive")]
        tag: String,
    },
    /// Run a whole schedule headlessly
    Run {
        #[arg(long, value_name = "DIR")]
        work: PathBuf,
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        #[arg(long, value_enum, default_value = "simulated")]
        interactor: InteractorKind,
        #[arg(long)]
        interactions: Option<usize>,
        #[arg(long)]
        expansions: Option<usize>,
        #[arg(long)]
        tag: Option<String>,
        #[command(flatten)]
        flags: SessionFlags,
    },
}

#[derive(Subcommand, Debug)]
pub enum BaselineCommand {
    /// Communities from k-means alone, no human and no LLM
    GraphOnly {
        #[arg(long, value_name = "DIR")]
        work: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        // --k sets the clusters, --m the users kept per cluster and
        // --communities-per-round the clusters kept.
        #[command(flatten)]
        flags: SessionFlags,
    },
    /// The LLM validates every candidate community
    LlmOnly {
        #[arg(long, value_name = "DIR")]
        work: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        interactions: Option<usize>,
        #[arg(long)]
        expansions: Option<usize>,
        #[command(flatten)]
        flags: SessionFlags,
    },
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub work: PathBuf,
    /// Write report.csv here
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "baseline")]
    pub tag: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long, value_name = "DIR")]
    pub session: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Second session for the side-by-side cohesion table
    #[arg(long, value_name = "DIR")]
    pub compare: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
