//! `certbound` command-line front end.

mod attack;
mod certify;
mod context;
mod oracle;
mod toy;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use certbound::{Engine, Norm};
use context::exit_code;

#[derive(Debug, Parser)]
#[command(name = "certbound", version, about = "Certify, attack and train small ReLU classifiers")]
struct Cli {
    /// Worker threads for per-sample work (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certify every sample of a dataset and write one CSV row per sample.
    Certify(CertifyArgs),
    /// Train a network from a TOML configuration.
    Train(TrainArgs),
    /// Bracket each margin between a certified bound and feasible values.
    Oracle(OracleArgs),
    /// Tightness study on the hand-built max-margin network.
    Toy(ToyArgs),
    /// PGD attack error of a model on a dataset.
    Attack(AttackArgs),
}

#[derive(Debug, Args)]
struct Perturbation {
    /// Radius, as a decimal or a fraction such as 8/255.
    #[arg(long, value_parser = parse_radius)]
    eps: f64,
    #[arg(long, default_value = "linf", value_parser = parse_norm)]
    norm: Norm,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    model: PathBuf,
    data: PathBuf,
    #[command(flatten)]
    perturbation: Perturbation,
    #[arg(long, default_value = "fastlin", value_parser = parse_engine)]
    engine: Engine,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// PGD steps behind the pgd_margin column.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    config: PathBuf,
    /// Model destination.
    #[arg(long)]
    out: PathBuf,
    /// Metrics log (JSON Lines); defaults to the model path with a `.metrics.jsonl` suffix.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    model: PathBuf,
    data: PathBuf,
    #[command(flatten)]
    perturbation: Perturbation,
    #[arg(long, default_value = "fastlin", value_parser = parse_engine)]
    engine: Engine,
    /// Grid points per axis for inputs of width 1 or 2.
    #[arg(long, default_value_t = 201)]
    resolution: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 0.3)]
    b: f64,
    #[arg(long, value_parser = parse_radius)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    model: PathBuf,
    data: PathBuf,
    #[command(flatten)]
    perturbation: Perturbation,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Step size (defaults to eps / 10).
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-sample CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_radius(s: &str) -> Result<f64, String> {
    certbound::data::parse_eps(s).map_err(|e| e.to_string())
}

fn parse_norm(s: &str) -> Result<Norm, String> {
    s.parse().map_err(|e: certbound::Error| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: certbound::Error| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let pool = context::pool(cli.jobs)?;
    pool.install(|| match cli.command {
        Command::Certify(a) => certify::run(a),
        Command::Train(a) => train::run(a),
        Command::Oracle(a) => oracle::run(a),
        Command::Toy(a) => toy::run(a),
        Command::Attack(a) => attack::run(a),
    })
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
            ExitCode::from(exit_code(&e))
        }
    }
}
