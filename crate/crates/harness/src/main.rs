use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use hamid_harness::{run_command, with_workers, ExperimentConfig, Format, HarnessError, Mode};

#[derive(Parser)]
#[command(name = "hamid", version, about = "Two-state Hamiltonian identification from single-basis measurement records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (flat TOML, see README).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write one file per table (plus raw records and spectra) into DIR
    /// instead of printing to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo / scaling trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Noise-free records: z_m = (1 - 2 eta) z(t).
    #[arg(long, global = true)]
    analytic: bool,
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: OutFormat,
    /// Worker threads for trials; defaults to all cores.
    #[arg(long, global = true, env = "HAMID_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Characterize the first axis from one record.
    Characterize,
    /// Characterize both axes and the azimuth between them.
    TwoAxis,
    /// Repeat the two-axis protocol and report coverage.
    Montecarlo,
    /// Sweep total measurements and fit the log-log slope of the uncertainty.
    Scaling,
}

#[derive(ValueEnum, Clone, Copy)]
enum OutFormat {
    Table,
    JsonLines,
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let mode = match cli.command {
        Command::Characterize => Mode::Characterize,
        Command::TwoAxis => Mode::TwoAxis,
        Command::Montecarlo => Mode::Montecarlo,
        Command::Scaling => Mode::Scaling,
    };
    let path = cli.config.as_ref().ok_or_else(|| HarnessError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    cfg.analytic |= cli.analytic;
    let format = match cli.format {
        OutFormat::Table => Format::Table,
        OutFormat::JsonLines => Format::JsonLines,
    };

    let start = Instant::now();
    let report = with_workers(cli.workers, || run_command(mode, &cfg))??;
    eprintln!("{} finished in {:.2?}", mode.name(), start.elapsed());
    match &cli.out {
        Some(dir) => report.write_dir(dir, format),
        None => {
            print!("{}", report.render(format));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error={} {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
