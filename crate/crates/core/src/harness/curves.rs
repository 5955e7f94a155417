//! Pulse-response traces and stand-alone calibration runs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::calibration::{alternating_pulse_drive, offset_stats, transfer_to_reference, OffsetStats};
use crate::device::{DeviceParams, Direction};
use crate::error::{Result, SimError};
use crate::matrix::Matrix;
use crate::rng::{substream, substream_seed};
use crate::tile::AnalogTile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub curve: &'static str,
    pub device: usize,
    pub pulse: usize,
    pub w: f64,
}

/// Pulses per branch of the up/down traces and pairs of the alternating ones.
pub const CURVE_PULSES: usize = 1000;
const ALTERNATING_DEVICES: usize = 4;

/// Weight traces under pulsing:
/// * `ideal`, `symmetric`, `asymmetric`: `CURVE_PULSES` up then as many down
///   pulses from `w = 0`, for a noiseless constant-step device, a constant-step
///   device with cycle noise, and the configured mean device with cycle noise;
/// * `alternating`: up/down pairs on devices drawn from the population,
///   starting at random weights inside their bounds.
pub fn device_curves(cfg: &ExperimentConfig) -> Vec<CurvePoint> {
    let d = &cfg.device;
    let mut rng = substream(cfg.seed, &[200]);
    let mut out = Vec::new();
    let archetypes: [(&'static str, f64, f64, f64); 3] = [
        ("ideal", 0.0, 0.0, 0.0),
        ("symmetric", 0.0, 0.0, d.cycle_noise_rel_std),
        ("asymmetric", d.slope_p_mean, d.slope_n_mean, d.cycle_noise_rel_std),
    ];
    for (name, sp, sn, noise) in archetypes {
        let mut dev = DeviceParams::new(d.dw_min0_mean, sp, sn);
        out.push(CurvePoint {
            curve: name,
            device: 0,
            pulse: 0,
            w: dev.w,
        });
        for p in 0..2 * CURVE_PULSES {
            let dir = if p < CURVE_PULSES { Direction::Up } else { Direction::Down };
            dev.apply_pulse(dir, noise, &mut rng);
            out.push(CurvePoint {
                curve: name,
                device: 0,
                pulse: p + 1,
                w: dev.w,
            });
        }
    }
    for k in 0..ALTERNATING_DEVICES {
        let mut dev: DeviceParams<f64> = d.sample(&mut rng);
        let (lo, hi) = (dev.w_lo().max(-1.0), dev.w_hi().min(1.0));
        dev.w = rng.random_range(lo..=hi);
        out.push(CurvePoint {
            curve: "alternating",
            device: k,
            pulse: 0,
            w: dev.w,
        });
        for p in 0..2 * CURVE_PULSES {
            let dir = if p % 2 == 0 { Direction::Up } else { Direction::Down };
            dev.apply_pulse(dir, d.cycle_noise_rel_std, &mut rng);
            out.push(CurvePoint {
                curve: "alternating",
                device: k,
                pulse: p + 1,
                w: dev.w,
            });
        }
    }
    out
}

/// Writes `device_curves.csv` into the output directory.
pub fn write_device_curves(cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output.dir).map_err(|e| SimError::io(&cfg.output.dir, e))?;
    let path = cfg.output.dir.join("device_curves.csv");
    write_csv(&path, device_curves(cfg))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub stage: &'static str,
    pub mean_abs_distance: f64,
    pub max_abs_distance: f64,
    pub offset_mean: f64,
    pub offset_std: f64,
}

fn row(stage: &'static str, s: OffsetStats) -> CalibrationRow {
    CalibrationRow {
        stage,
        mean_abs_distance: s.mean_abs_distance,
        max_abs_distance: s.max_abs_distance,
        offset_mean: s.offset_mean,
        offset_std: s.offset_std,
    }
}

/// Calibrate one `rows x cols` array from random in-bound weights and report
/// the distance to the symmetry points before the drive, after it, and the
/// offsets left after the reference transfer. Writes `calibration.csv`.
pub fn calibration_run(cfg: &ExperimentConfig, rows: usize, cols: usize) -> Result<Vec<CalibrationRow>> {
    let mut tile: AnalogTile<f64> = AnalogTile::new(
        rows,
        cols,
        &cfg.device,
        cfg.periphery.clone(),
        substream_seed(cfg.seed, &[300]),
    )?;
    let mut rng = substream(cfg.seed, &[301]);
    let start = Matrix::from_fn(rows, cols, |r, c| {
        let d = tile.device(r, c);
        rng.random_range(d.w_lo().max(-1.0)..=d.w_hi().min(1.0))
    });
    tile.set_weights(&start)?;
    let initial = offset_stats(&tile);
    alternating_pulse_drive(&mut tile, cfg.calibration.n_pairs)?;
    let driven = offset_stats(&tile);
    let prog = cfg
        .calibration
        .programming_error_std
        .unwrap_or(cfg.device.symmetry_offset_std);
    transfer_to_reference(&mut tile, prog)?;
    let rows_out = vec![
        row("initial", initial),
        row("driven", driven),
        row("transferred", offset_stats(&tile)),
    ];
    fs::create_dir_all(&cfg.output.dir).map_err(|e| SimError::io(&cfg.output.dir, e))?;
    write_csv(&cfg.output.dir.join("calibration.csv"), rows_out.clone())?;
    Ok(rows_out)
}

fn write_csv<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SimError::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| SimError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}
