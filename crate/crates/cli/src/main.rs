use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rpu_core::harness::{
    calibration_run, run_experiment_with, run_sweep, write_device_curves, ExperimentConfig, SweepAxis,
    DATA_DIR_ENV,
};

/// Train neural networks on simulated resistive cross-point arrays.
#[derive(Parser)]
#[command(name = "rpusim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Override a config value, e.g. `--set tiki.ns=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root for relative data paths.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate, writing metrics into the output directory.
    Train(Common),
    /// Calibrate one array and report distances to the symmetry points.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 32)]
        cols: usize,
    },
    /// One run per value of a single parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// gamma, lambda_c, ns, transfer_vectors, symmetry_offset_std,
        /// mvm_noise_std or threshold_tv.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Write pulse-response traces of the device archetypes.
    DeviceCurves(Common),
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| anyhow!("override `{s}` is not KEY=VALUE"))
        })
        .collect()
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let ov = parse_overrides(&c.overrides)?;
    ExperimentConfig::from_file(&c.config, &ov).with_context(|| format!("loading {}", c.config.display()))
}

fn data_root(c: &Common) -> Option<&Path> {
    c.data_dir.as_deref()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load(&c)?;
            let recs = run_experiment_with(&cfg, data_root(&c))?;
            for r in &recs {
                println!(
                    "epoch {:>3}  train_loss {:.5}  test_metric {:.4}  cycles {} / {}",
                    r.epoch, r.train_loss, r.test_metric, r.sgd_cycles, r.tt_cycles
                );
            }
            println!("metrics: {}", cfg.output.metrics_path().display());
        }
        Command::Calibrate { common, rows, cols } => {
            let cfg = load(&common)?;
            for r in calibration_run(&cfg, rows, cols)? {
                println!(
                    "{:<12} mean|w-ws| {:.6}  max|w-ws| {:.6}  offset mean {:+.6} std {:.6}",
                    r.stage, r.mean_abs_distance, r.max_abs_distance, r.offset_mean, r.offset_std
                );
            }
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load(&common)?;
            let axis: SweepAxis = axis.parse()?;
            for (v, recs) in run_sweep(&cfg, axis, &values, data_root(&common))? {
                if let Some(last) = recs.last() {
                    println!("{axis}={v}: final test_metric {:.4}", last.test_metric);
                }
            }
            println!("comparison: {}", cfg.output.dir.join("comparison.csv").display());
        }
        Command::DeviceCurves(c) => {
            let cfg = load(&c)?;
            println!("{}", write_device_curves(&cfg)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
