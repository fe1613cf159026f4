//! The `crossing` command: run, batch, stats, tune and serve.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use crossing_core::sim::ScenarioKind;
use crossing_core::ControllerKind;

pub mod commands;
pub mod error;
pub mod serve;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "crossing", version, about = "Vehicle-pedestrian crossing negotiation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its trace.
    Run(RunArgs),
    /// Run the scenario x controller x seed grid and write a manifest.
    Batch(BatchArgs),
    /// Summarize one or more batches: outlier filter, group means, H and U tests.
    Stats(StatsArgs),
    /// Tune the MPC parameters against the global objective.
    Tune(TuneArgs),
    /// Serve live sessions over a websocket, plus the static UI bundle.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML config; defaults are used for anything it leaves out.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// crossing, remaining, delayed_crossing or delayed_remaining.
    #[arg(long, default_value = "delayed_crossing")]
    pub scenario: ScenarioKind,
    /// iampdm, rbdm or nia.
    #[arg(long, default_value = "iampdm")]
    pub controller: ControllerKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Best-parameter file written by `tune`; overrides the tuned parameters.
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Output directory for the trace.
    #[arg(short, long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Seed list overriding `batch.seeds`, e.g. `0..10` or `1,4,7`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<ScenarioKind>>,
    #[arg(long, value_delimiter = ',')]
    pub controllers: Option<Vec<ControllerKind>>,
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Batch directory: manifest.json, config.toml and one trace per episode.
    #[arg(short, long, default_value = "out/batch")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Batch manifests to pool.
    #[arg(required = true)]
    pub manifests: Vec<PathBuf>,
    /// Pool inputs even if their config hashes differ.
    #[arg(long)]
    pub force: bool,
    /// Report directory; defaults to the first manifest's directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Previous tuning session to compare against. With `--k`, re-tunes its
    /// config under new objective weights.
    #[arg(long, conflicts_with = "config")]
    pub previous: Option<PathBuf>,
    /// New objective weights `k1,k2,k3,k4` for the re-tune.
    #[arg(long, value_delimiter = ',', requires = "previous")]
    pub k: Option<Vec<f64>>,
    /// Overrides `tuning.budget`.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Session directory.
    #[arg(short, long, default_value = "out/tune")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Plant ticks per second of wall time.
    #[arg(long, default_value_t = 20.0)]
    pub tick_rate: f64,
    /// Controller for clients that join without choosing one.
    #[arg(long, default_value = "iampdm")]
    pub controller: ControllerKind,
    /// Directory with the built UI bundle.
    #[arg(long, default_value = "web-ui")]
    pub static_dir: PathBuf,
    /// Where finished session episodes are written as traces.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_VALIDATION } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a).map(|path| println!("{}", path.display())),
        Command::Batch(a) => commands::batch(&a).map(|path| println!("{}", path.display())),
        Command::Stats(a) => commands::stats(&a).map(|table| print!("{table}")),
        Command::Tune(a) => commands::tune(&a).map(|summary| print!("{summary}")),
        Command::Serve(a) => serve::serve(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
