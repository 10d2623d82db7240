//! `strata`: ingest a document corpus into hierarchy-aware indices, query
//! them, and evaluate rankings against a question bank.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::AppConfig;

#[derive(Debug, Parser)]
#[command(name = "strata", version, about = "Hierarchy-aware retrieval over similar documents")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    index: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Converter window size in words.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Context padding around each window, in words.
    #[arg(long, global = true)]
    padding: Option<usize>,
    #[arg(long, global = true)]
    k1: Option<f64>,
    #[arg(long, global = true)]
    b: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and save indices for a corpus directory.
    Ingest {
        /// JSON manifest listing the documents to load.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Skip cascading metadata (baseline embedding text).
        #[arg(long)]
        no_cascade: bool,
    },
    /// Rank segments for a query and print the top results.
    Query {
        text: String,
        /// Emit the full context bundle as JSON.
        #[arg(long)]
        json: bool,
        /// Extra critical keywords for this query.
        #[arg(long, value_delimiter = ',')]
        keywords: Vec<String>,
        /// Pass the context to the configured answer plug-in.
        #[arg(long)]
        answer: bool,
    },
    /// Score a JSONL question bank with the log-rank index.
    Eval {
        bank: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Embedding cohesion and 2-D coordinates, with and without cascading.
    Cohesion {
        #[arg(long, value_enum, default_value = "document")]
        by: Grouping,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grouping {
    Document,
    SectionTitle,
}

/// Bad flags or config values; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn resolve_config(cli: &Cli) -> anyhow::Result<AppConfig> {
    let mut config = match &cli.config {
        Some(path) => AppConfig::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => AppConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = &o.corpus {
        config.corpus_dir = Some(v.clone());
    }
    if let Some(v) = &o.index {
        config.index_dir = v.clone();
    }
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = o.$flag { config.$field = v; })*
        };
    }
    apply!(alpha => alpha, beta => beta, gamma => gamma, top_k => top_k, window => window_words,
        padding => padding_words, k1 => k1, b => b);
    if let Command::Ingest { manifest: Some(m), .. } = &cli.command {
        config.manifest = Some(m.clone());
    }
    if let Command::Ingest { no_cascade: true, .. } = &cli.command {
        config.cascade = false;
    }
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = resolve_config(&cli)?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Ingest { .. } => commands::ingest(&config, &mut stdout),
        Command::Query {
            text,
            json,
            keywords,
            answer,
        } => commands::query(&config, &text, &keywords, json, answer, &mut stdout),
        Command::Eval { bank, output } => commands::eval(&config, &bank, output.as_deref(), &mut stdout),
        Command::Cohesion { by, output } => commands::cohesion(&config, by, output.as_deref(), &mut stdout),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
