use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use streamsim_cli::config::{parse_config, ExperimentConfig};
use streamsim_cli::experiment::{ablation, calibrate_ranker, heterogeneity_study, run_experiment};
use streamsim_cli::report::{calibration_csv, emit_report, write_atomic, Report};
use streamsim_core::cost_model::parse_profile_csv;
use streamsim_core::fit_profile;

#[derive(Parser)]
#[command(name = "streamsim", version, about = "Disaggregated RL training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured pipeline mode.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the first seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Four-step improvement ladder from colocated to fully asynchronous.
    Ablation {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Homogeneous versus heterogeneous hardware, normalized by cost.
    Hetero {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit a two-segment decode latency profile to `batch_size,ms_per_token` rows.
    FitProfile {
        csv: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Calibrate ranker noise to the configured tail recall targets.
    CalibrateRanker {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_FAILURE: u8 = 2;

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = parse_config(path)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Config)?;
    if let Some(s) = seed {
        cfg.pipeline.seed = s;
    }
    Ok(cfg)
}

fn finish(report: &Report, out: &Path) -> Result<(), Failure> {
    emit_report(report, out)
        .with_context(|| format!("writing report to {}", out.display()))
        .map_err(Failure::Run)?;
    print!("{}", report.to_csv());
    if report.any_failed() {
        return Err(Failure::Run(anyhow::anyhow!("one or more scenarios failed")));
    }
    Ok(())
}

fn write_one(out: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(out)
        .and_then(|_| write_atomic(&out.join(name), text))
        .with_context(|| format!("writing {}", out.join(name).display()))
        .map_err(Failure::Run)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out, seed } => finish(&run_experiment(&load(&config, seed)?), &out),
        Command::Ablation { config, out } => finish(&ablation(&load(&config, None)?), &out),
        Command::Hetero { config, out } => finish(&heterogeneity_study(&load(&config, None)?), &out),
        Command::FitProfile { csv, out } => {
            let text = std::fs::read_to_string(&csv)
                .with_context(|| format!("reading {}", csv.display()))
                .map_err(Failure::Config)?;
            let points = parse_profile_csv(&text)
                .context("parsing profile measurements")
                .map_err(Failure::Config)?;
            let p = fit_profile(&points).context("fitting profile").map_err(Failure::Run)?;
            let body = format!(
                "t0,k0,b_star,k1,t1\n{},{},{},{},{}\n",
                p.t0(),
                p.k0(),
                p.b_star(),
                p.k1(),
                p.t1()
            );
            write_one(&out, "profile.csv", &body)?;
            print!("{body}");
            Ok(())
        }
        Command::CalibrateRanker { config, out } => {
            let cfg = load(&config, None)?;
            let rows = calibrate_ranker(&cfg)
                .context("calibrating ranker")
                .map_err(Failure::Run)?;
            let body = calibration_csv(&rows);
            write_one(&out, "calibration.csv", &body)?;
            print!("{body}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("STREAMSIM_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: STREAMSIM_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
