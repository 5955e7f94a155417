//! Symmetry-point shifting.
//!
//! An alternating up/down pulse sequence cancels the symmetric part of the
//! device response, so each device drifts to the weight where its up and
//! down steps are equal. That state is then copied to the reference device,
//! which re-centres the effective weight: afterwards the symmetry point sits
//! at `w = 0` up to the reference programming error.

use serde::{Deserialize, Serialize};

use crate::device::Direction;
use crate::error::{Result, SimError};
use crate::rng::gaussian;
use crate::tile::AnalogTile;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    pub n_pairs: u32,
    /// Std of the residual symmetry offset left by reference programming.
    /// When unset, the device population's `symmetry_offset_std` is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub programming_error_std: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_pairs: 2000,
            programming_error_std: None,
        }
    }
}

/// Summary of how far devices sit from their symmetry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetStats {
    pub mean_abs_distance: f64,
    pub max_abs_distance: f64,
    pub offset_mean: f64,
    pub offset_std: f64,
}

/// `n_pairs` (up, down) pulse pairs to every device, in parallel.
pub fn alternating_pulse_drive<T: Scalar>(tile: &mut AnalogTile<T>, n_pairs: u32) -> Result<()> {
    if n_pairs == 0 {
        return Err(SimError::InvalidConfig("alternating drive needs n_pairs >= 1".into()));
    }
    for _ in 0..n_pairs {
        for k in 0..tile.len() {
            tile.pulse_device(k, Direction::Up);
        }
        for k in 0..tile.len() {
            tile.pulse_device(k, Direction::Down);
        }
    }
    Ok(())
}

/// Copy the driven state to the references: every weight is re-zeroed and the
/// symmetry offset becomes a fresh `N(0, programming_error_std)` residual.
pub fn transfer_to_reference<T: Scalar>(tile: &mut AnalogTile<T>, programming_error_std: f64) -> Result<()> {
    if !(programming_error_std >= 0.0) {
        return Err(SimError::InvalidConfig("programming_error_std must be >= 0".into()));
    }
    for k in 0..tile.len() {
        let residual = if programming_error_std > 0.0 {
            T::of(programming_error_std) * gaussian::<T, _>(tile.rng_mut())
        } else {
            T::zero()
        };
        tile.reset_device(k, residual, T::zero());
    }
    tile.mark_calibrated();
    Ok(())
}

/// Drive followed by transfer. Returns the distance statistics measured after
/// the drive (convergence quality) and the offsets after the transfer.
pub fn calibrate<T: Scalar>(
    tile: &mut AnalogTile<T>,
    n_pairs: u32,
    programming_error_std: f64,
) -> Result<(OffsetStats, OffsetStats)> {
    alternating_pulse_drive(tile, n_pairs)?;
    let driven = offset_stats(tile);
    transfer_to_reference(tile, programming_error_std)?;
    Ok((driven, offset_stats(tile)))
}

pub fn offset_stats<T: Scalar>(tile: &AnalogTile<T>) -> OffsetStats {
    let n = tile.len() as f64;
    let (mut sum_d, mut max_d, mut sum_o, mut sum_o2) = (0.0, 0.0_f64, 0.0, 0.0);
    for d in tile.devices() {
        let dist = (d.w - d.w_s).abs().as_f64();
        sum_d += dist;
        max_d = max_d.max(dist);
        let o = d.w_s.as_f64();
        sum_o += o;
        sum_o2 += o * o;
    }
    let offset_mean = sum_o / n;
    OffsetStats {
        mean_abs_distance: sum_d / n,
        max_abs_distance: max_d,
        offset_mean,
        offset_std: (sum_o2 / n - offset_mean * offset_mean).max(0.0).sqrt(),
    }
}
