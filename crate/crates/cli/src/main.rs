use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use otdro::bounds::Theorem;
use otdro::config::{BoundsRunConfig, DualValueConfig, PrimalCheckConfig};
use otdro::experiment::{run_experiment, ExperimentConfig};
use otdro::plots::emit_plots;

#[derive(Parser)]
#[command(name = "otdro", version, about = "Robust risk under optimal-transport and f-divergence neighborhoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the dual problem for one θ on a sample.
    DualValue {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare primal and dual values on random finite instances.
    PrimalCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the entropy-integral envelopes and tail bounds.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the optimal-value deviation bounds.
    ConcentrationExperiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the ERM excess-risk bounds.
    ErmExperiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG figures from an experiment's trials.csv.
    Plots {
        #[arg(long)]
        csv: PathBuf,
    },
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(file).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    serde_json::to_writer_pretty(File::create(path)?, value)?;
    Ok(())
}

fn experiment(config: &Path, out: &Path, erm: bool) -> Result<bool> {
    let cfg: ExperimentConfig = read_config(config)?;
    let is_erm = matches!(cfg.scenario, Theorem::OtErm | Theorem::OtRegErm);
    if is_erm != erm {
        bail!("scenario {:?} belongs to the other experiment subcommand", cfg.scenario);
    }
    let output = run_experiment(cfg, out)?;
    println!("{:>8} {:>4} {:>10} {:>10} {:>10} {:>6}", "eps", "sign", "frequency", "tail", "allowance", "pass");
    for r in &output.summary {
        let verdict = if !r.checked { "n/a" } else if r.pass { "ok" } else { "FAIL" };
        println!("{:>8} {:>4} {:>10.4} {:>10.4e} {:>10.4e} {:>6}", r.eps, r.sign, r.frequency, r.tail, r.allowance, verdict);
    }
    let gap = output.reference.stability_gap.map_or("n/a".to_owned(), |g| format!("{g:.3e}"));
    println!("envelope {:.6}, reference {:.6}, doubling gap {gap}", output.envelope, output.reference.value);
    Ok(output.passed())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::DualValue { config, out } => {
            let cfg: DualValueConfig = read_config(&config)?;
            let result = cfg.run()?;
            write_json(&out, &result)?;
            println!("value {} (lambda {}, {:?})", result.solution.value, result.solution.lambda_opt, result.solution.certificate);
            Ok(true)
        }
        Command::PrimalCheck { config } => {
            let cfg: PrimalCheckConfig = read_config(&config)?;
            let rows = cfg.run()?;
            println!("{:>8} {:>14} {:>14} {:>11} {:>5}", "instance", "primal", "dual", "gap", "pass");
            for r in &rows {
                println!("{:>8} {:>14.9} {:>14.9} {:>11.3e} {:>5}", r.instance, r.primal, r.dual, r.gap, if r.pass { "ok" } else { "FAIL" });
            }
            Ok(rows.iter().all(|r| r.pass))
        }
        Command::Bounds { config, out } => {
            let cfg: BoundsRunConfig = read_config(&config)?;
            let result = cfg.run()?;
            write_json(&out, &result)?;
            println!("D_n {}", result.report.d_n);
            if let (Some(r), Some(rt)) = (result.report.r_n, result.report.r_n_tilde) {
                println!("R_n {r}, R_n_tilde {rt}");
            }
            match &result.g_check {
                Some(g) => {
                    println!("g check: {} tuples, {} violations", g.tuples, g.violations.len());
                    Ok(g.passed())
                }
                None => Ok(true),
            }
        }
        Command::ConcentrationExperiment { config, out } => experiment(&config, &out, false),
        Command::ErmExperiment { config, out } => experiment(&config, &out, true),
        Command::Plots { csv } => {
            for p in emit_plots(&csv)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
