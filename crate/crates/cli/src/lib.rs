//! `twinforecast` command line and edge service.

pub mod commands;
pub mod config;
pub mod error;
pub mod project;
pub mod serve;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use twinforecast_core::eval::{DEFAULT_RUNS, DEFAULT_WARMUP};
use twinforecast_core::forecast::Architecture;
use twinforecast_core::series::DEFAULT_MAX_GAP_HOURS;

use crate::error::CliError;
use crate::project::{Project, Target};

#[derive(Debug, Parser)]
#[command(
    name = "twinforecast",
    version,
    about = "Digital-twin indoor climate forecasting at the edge"
)]
pub struct Cli {
    /// Project configuration file.
    #[arg(long, global = true, default_value = "twinforecast.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import a sensor CSV or fetch outdoor weather into the series store.
    Ingest(IngestArgs),
    /// Inspect or edit the building twin.
    #[command(subcommand)]
    Twin(TwinCommand),
    /// Build and record the feature dataset for a room and target.
    Preprocess {
        #[arg(long)]
        room: String,
        #[arg(long)]
        target: Target,
    },
    Train(TrainArgs),
    /// Rolling-origin evaluation on the test segment.
    Evaluate(EvalArgs),
    /// Single-window inference latency.
    Bench(BenchArgs),
    /// Write a synthetic building dataset into the project.
    Generate(GenerateArgs),
    /// Serve forecasts over HTTP.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, conflicts_with = "weather")]
    pub file: Option<PathBuf>,
    #[arg(long)]
    pub series_id: Option<String>,
    /// Unit of the readings, e.g. C, RH, ppm.
    #[arg(long)]
    pub unit: Option<String>,
    #[arg(long, default_value = "timestamp")]
    pub timestamp_column: String,
    #[arg(long, default_value = "value")]
    pub value_column: String,
    /// Treat the file as provider weather data (no bounds filter).
    #[arg(long = "weather-kind")]
    pub kind_weather: bool,
    /// Fetch the seven weather variables from the configured connector.
    #[arg(long)]
    pub weather: bool,
    /// Connector source overriding the config, `file:<path>` or a URL.
    #[arg(long, requires = "weather")]
    pub source: Option<String>,
    /// Longest gap, in hours, filled by interpolation.
    #[arg(long, default_value_t = DEFAULT_MAX_GAP_HOURS)]
    pub max_gap: usize,
}

#[derive(Debug, Subcommand)]
pub enum TwinCommand {
    /// Write the default instrumented building twin.
    Init {
        #[arg(long)]
        force: bool,
    },
    Show,
    Import {
        file: PathBuf,
    },
    /// Sensors in a location, with their bound series.
    Points {
        location: String,
        #[arg(long)]
        class: Option<String>,
    },
    Bind {
        #[arg(long)]
        point: String,
        #[arg(long)]
        series: String,
        #[arg(long)]
        unit: String,
    },
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse()
        .map_err(|e: twinforecast_core::forecast::ArchParseError| e.to_string())
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub room: String,
    #[arg(long)]
    pub target: Target,
    /// sn24, lstm, tcn, nhits or tide.
    #[arg(long, value_parser = parse_arch)]
    pub arch: Architecture,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON object of architecture hyperparameters, e.g. '{"hidden": 32}'.
    #[arg(long)]
    pub hyper: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub train_stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Hours between forecast origins.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
    /// Time a busy-wait stub of this many milliseconds instead of the model.
    #[arg(long)]
    pub stub_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Preset name or a scenario JSON file.
    #[arg(long, default_value = "lofstad-like")]
    pub scenario: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let project = Project::open(&cli.config)?;
    let p = &project;
    match &cli.command {
        Command::Ingest(a) => commands::cmd_ingest(p, a, out),
        Command::Twin(c) => commands::cmd_twin(p, c, out),
        Command::Preprocess { room, target } => commands::cmd_preprocess(p, room, *target, out),
        Command::Train(a) => commands::cmd_train(p, a, out),
        Command::Evaluate(a) => commands::cmd_evaluate(p, a, out),
        Command::Bench(a) => commands::cmd_bench(p, a, out),
        Command::Generate(a) => commands::cmd_generate(p, a, out),
        Command::Serve { port } => serve::run(project, *port),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
