use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use codedcast_cli::{output, CliError, Recipe};
use codedcast_sim::experiments::{bench, controller_demo, DemoConfig};
use tracing_subscriber::EnvFilter;

/// Log filter variable, e.g. `CODEDCAST_LOG=debug`.
const LOG_ENV: &str = "CODEDCAST_LOG";

const EXIT_ASSERTION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "codedcast",
    version,
    about = "Coded transaction broadcast experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulator config or recipe and write metrics files.
    Run {
        config: PathBuf,
        /// Output directory; overrides the recipe's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Variants to simulate concurrently; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Two senders sharing one peer, from three initial rate pairs.
    ControllerDemo {
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DemoConfig::default().seed)]
        seed: u64,
    },
    /// Single-threaded encode and decode throughput.
    Bench {
        #[arg(long, default_value_t = 200_000)]
        txs: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) | CliError::Sim(codedcast_sim::SimError::Config { .. }) => {
                    ExitCode::from(EXIT_USAGE)
                }
                CliError::Io { .. } => ExitCode::from(EXIT_USAGE),
                CliError::Sim(_) => ExitCode::from(EXIT_ASSERTION),
            }
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Run { config, out, jobs } => run(config, out, jobs),
        Command::ControllerDemo { out, seed } => {
            let cfg = DemoConfig {
                seed,
                ..DemoConfig::default()
            };
            let result = controller_demo(&cfg)?;
            match out {
                Some(path) => output::write(&path, &result.csv())?,
                None => print!("{}", result.csv()),
            }
            for s in &result.steady {
                eprintln!(
                    "init {} ({}, {}): steady rate_a {:.1}, rate_b {:.1}, loss_a {:.4}, loss_b {:.4}",
                    s.init, s.initial.0, s.initial.1, s.rate_a, s.rate_b, s.loss_a, s.loss_b
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { txs, k, seed } => {
            if txs == 0 {
                return Err(CliError::Config("--txs must be positive".into()));
            }
            let r = bench(txs, k, seed)?;
            println!(
                "encode: {} codewords in {:.3} s, {:.0} codewords/s",
                r.encode_codewords, r.encode_secs, r.encode_codewords_per_sec
            );
            println!(
                "decode: {} txs from {} codewords ({:.3} per tx) in {:.3} s, {:.0} tx/s, {:.1} Mbps",
                r.decode_txs, r.decode_codewords, r.codewords_per_tx, r.decode_secs, r.decode_txs_per_sec, r.decode_mbps
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, jobs: Option<usize>) -> Result<ExitCode, CliError> {
    let recipe = Recipe::load(&config)?;
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let outcome = recipe.run(jobs)?;
    let out_dir = out.unwrap_or_else(|| recipe.out_dir.clone());
    output::write_all(&out_dir, &outcome.reports)?;
    for (name, r) in &outcome.reports {
        println!("{}", output::summary_line(name, r));
    }
    for c in &outcome.checks {
        println!(
            "{} {} (got {:.4})",
            if c.pass { "PASS" } else { "FAIL" },
            c.label,
            c.value
        );
    }
    if let Some(budget) = recipe.time_budget {
        println!(
            "{} time budget {:.0} s (took {:.1} s)",
            if outcome.over_budget { "FAIL" } else { "PASS" },
            budget.as_secs_f64(),
            outcome.elapsed.as_secs_f64()
        );
    }
    println!("wrote {}", out_dir.display());
    Ok(if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ASSERTION)
    })
}
