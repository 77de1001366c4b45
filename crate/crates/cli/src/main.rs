use std::path::PathBuf;
use std::process::ExitCode;

use aqcp_harness::{commands, ExperimentConfig, Report};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aqcp", version, about = "Adaptive conformal prediction experiments on a simulated quantum model")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved config and exit unless a command is given.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the encoder; writes model.json and loss.csv.
    Train,
    /// Write dataset.csv.
    GenerateData,
    /// Record shots for the calibration and test inputs; writes shots.csv.
    SampleShots,
    /// AQCP runs per (gamma, score); writes metrics and run_summary.csv.
    Run,
    /// Set size against shot count; writes efficiency.csv.
    Efficiency,
    /// Optimal set sizes over the test inputs.
    Oracle,
}

fn resolve(cli: &Cli) -> aqcp::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    cfg.check_inputs()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cli.print_config {
        print!("{}", cfg.to_text());
    }
    let Some(command) = cli.command else {
        return if cli.print_config { ExitCode::SUCCESS } else { ExitCode::from(1) };
    };
    let result: aqcp::Result<Report> = match command {
        Command::Train => commands::cmd_train(&cfg),
        Command::GenerateData => commands::cmd_generate_data(&cfg),
        Command::SampleShots => commands::cmd_sample_shots(&cfg),
        Command::Run => commands::cmd_run(&cfg),
        Command::Efficiency => commands::cmd_efficiency(&cfg),
        Command::Oracle => commands::cmd_oracle(&cfg),
    };
    match result {
        Ok(report) => {
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            for msg in &report.failures {
                eprintln!("check failed: {msg}");
            }
            if report.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
