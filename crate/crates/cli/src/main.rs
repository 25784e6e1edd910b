use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trajopt::seir::FixedBlock;
use trajopt_cli::config::{CampaignConfig, Overrides};
use trajopt_cli::{CliError, SimulateArgs};

#[derive(Parser)]
#[command(name = "trajopt", version, about = "Trajectory-oriented calibration of stochastic simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON campaign configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Initial design size.
    #[arg(long)]
    budget_init: Option<usize>,
    /// Total simulator evaluations.
    #[arg(long)]
    budget_max: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write its artifacts.
    Optimize(Common),
    /// Paired campaigns of two surrogates over several repetitions.
    Compare(Common),
    /// Print one SEIR trajectory as CSV.
    Simulate {
        /// Transmission rate.
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        kappa_a: f64,
        #[arg(long)]
        kappa_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output days, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100")]
        times: Vec<u32>,
        /// Simulated days (default: the last output day).
        #[arg(long)]
        horizon: Option<u32>,
        /// Takes the fixed SEIR block from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the CSV to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(c: &Common) -> Result<CampaignConfig, CliError> {
    let mut cfg = CampaignConfig::load(&c.config)?;
    cfg.apply(&Overrides {
        seed: c.seed,
        out: c.out.clone(),
        budget_init: c.budget_init,
        budget_max: c.budget_max,
    });
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize(c) => {
            let out = trajopt_cli::optimize(&load(&c)?)?;
            println!("artifacts written to {}", out.display());
        }
        Command::Compare(c) => {
            let cfg = load(&c)?;
            let s = trajopt_cli::compare(&cfg)?;
            println!(
                "{} vs {}: {} wins, {} losses, {} ties; win rate {:.3}; median best g {} vs {}",
                s.arms[0].as_str(),
                s.arms[1].as_str(),
                s.wins_a,
                s.wins_b,
                s.ties,
                s.win_rate_a,
                s.median_best_g[0],
                s.median_best_g[1]
            );
        }
        Command::Simulate {
            beta,
            kappa_a,
            kappa_s,
            seed,
            times,
            horizon,
            config,
            out,
        } => {
            let fixed = match config {
                Some(p) => CampaignConfig::load(&p)?.seir.fixed,
                None => FixedBlock::default(),
            };
            let csv = trajopt_cli::simulate(&SimulateArgs {
                beta,
                kappa_a,
                kappa_s,
                seed,
                days: times,
                horizon,
                fixed,
            })?;
            match out {
                Some(p) => std::fs::write(&p, csv).map_err(|e| CliError::io(&p, e))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
