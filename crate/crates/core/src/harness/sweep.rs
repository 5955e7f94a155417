//! One-parameter sweeps over an experiment configuration.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{run_experiment_with, RunRecord};
use crate::error::{Result, ResultExt, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    LambdaC,
    Ns,
    TransferVectors,
    SymmetryOffsetStd,
    MvmNoiseStd,
    ThresholdTv,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::Gamma,
        SweepAxis::LambdaC,
        SweepAxis::Ns,
        SweepAxis::TransferVectors,
        SweepAxis::SymmetryOffsetStd,
        SweepAxis::MvmNoiseStd,
        SweepAxis::ThresholdTv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::LambdaC => "lambda_c",
            SweepAxis::Ns => "ns",
            SweepAxis::TransferVectors => "transfer_vectors",
            SweepAxis::SymmetryOffsetStd => "symmetry_offset_std",
            SweepAxis::MvmNoiseStd => "mvm_noise_std",
            SweepAxis::ThresholdTv => "threshold_tv",
        }
    }

    /// Dotted config key the axis sets.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "tiki.gamma",
            SweepAxis::LambdaC => "tiki.lambda_c",
            SweepAxis::Ns => "tiki.ns",
            SweepAxis::TransferVectors => "tiki.transfer_vectors",
            SweepAxis::SymmetryOffsetStd => "device.symmetry_offset_std",
            SweepAxis::MvmNoiseStd => "periphery.mvm_noise_std",
            SweepAxis::ThresholdTv => "tiki.threshold_tv",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| SimError::UnknownAxis(s.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct ComparisonRow<'a> {
    axis: &'a str,
    value: &'a str,
    epoch: u32,
    train_loss: f64,
    test_metric: f64,
    sgd_cycles: u64,
    tt_cycles: u64,
    pulse_prob_clamps: u64,
}

/// Run the base config once per value, each in `<dir>/<axis>=<value>/`, and
/// write `<dir>/comparison.csv` with every epoch of every run.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    data_root: Option<&Path>,
) -> Result<Vec<(String, Vec<RunRecord>)>> {
    if values.is_empty() {
        return Err(SimError::InvalidConfig("sweep needs at least one value".into()));
    }
    let mut runs = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base
            .with_overrides(&[(axis.key().to_string(), v.clone())])
            .context(|| format!("{axis}={v}"))?;
        cfg.output.dir = base.output.dir.join(format!("{axis}={v}"));
        let recs = run_experiment_with(&cfg, data_root).context(|| format!("sweep run {axis}={v}"))?;
        runs.push((v.clone(), recs));
    }
    fs::create_dir_all(&base.output.dir).map_err(|e| SimError::io(&base.output.dir, e))?;
    let path = base.output.dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| SimError::format(&path, e.to_string()))?;
    for (v, recs) in &runs {
        for r in recs {
            w.serialize(ComparisonRow {
                axis: axis.name(),
                value: v,
                epoch: r.epoch,
                train_loss: r.train_loss,
                test_metric: r.test_metric,
                sgd_cycles: r.sgd_cycles,
                tt_cycles: r.tt_cycles,
                pulse_prob_clamps: r.pulse_prob_clamps,
            })
            .map_err(|e| SimError::format(&path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| SimError::io(&path, e))?;
    Ok(runs)
}
