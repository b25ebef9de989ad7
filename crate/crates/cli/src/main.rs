use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;
mod settings;

use settings::Settings;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit status 2.
    Usage(String),
    /// Missing or malformed input, or a failed write; exit status 1.
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

pub fn data<E: fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "sleeplog", version, about = "Sleep-log tweet pipeline and analyses")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_kv)]
    set: Vec<(String, String)>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read archived tweets, drop malformed lines and duplicates.
    Ingest(commands::IngestArgs),
    /// Extract sleep logs from ingested tweets.
    Parse(commands::ParseArgs),
    /// Apply the duration window and optional requirements.
    Filter(commands::FilterArgs),
    /// Resolve each user to a country.
    Geo(commands::GeoArgs),
    /// Run the analysis battery and write tables, figures and a summary.
    Analyze(commands::AnalyzeArgs),
    /// Generate a labelled synthetic corpus.
    Synth(commands::SynthArgs),
    /// Re-render SVG figures from a figures.json file.
    Report(commands::ReportArgs),
    /// Build the funnel table from stage ledgers.
    Funnel(commands::FunnelArgs),
    /// Score pipeline output against synthetic ground truth.
    Score(commands::ScoreArgs),
    /// Ingest, parse, filter, geo, funnel and analyze in one go.
    RunAll(commands::RunAllArgs),
}

fn settings_from(cli: &Cli, extra: Vec<(String, String)>) -> Result<Settings, CliError> {
    let mut flags = Vec::new();
    if cli.sequential {
        flags.push(("execution".to_owned(), "sequential".to_owned()));
    }
    flags.extend(cli.set.iter().cloned());
    flags.extend(extra);
    Settings::load(cli.config.as_deref(), std::env::vars(), flags)
}

fn init_threads(n: Option<usize>) -> Result<(), CliError> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    let overrides = match &cli.command {
        Command::Filter(a) => a.overrides(),
        Command::Geo(a) => a.overrides(),
        Command::Synth(a) => a.overrides(),
        Command::Ingest(a) => a.overrides(),
        _ => Vec::new(),
    };
    let s = settings_from(&cli, overrides)?;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &s),
        Command::Parse(a) => commands::parse(a, &s),
        Command::Filter(a) => commands::filter(a, &s),
        Command::Geo(a) => commands::geo(a, &s),
        Command::Analyze(a) => commands::analyze(a, &s),
        Command::Synth(a) => commands::synth(a, &s),
        Command::Report(a) => commands::report(a, &s),
        Command::Funnel(a) => commands::funnel(a, &s),
        Command::Score(a) => commands::score(a, &s),
        Command::RunAll(a) => commands::run_all(a, &s),
    }
}


fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
