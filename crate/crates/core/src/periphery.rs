//! Array periphery: read noise, signal bounds, DAC/ADC resolution and the
//! pulse-train length used by the stochastic update.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeripheryConfig {
    /// Additive Gaussian noise on every MVM output.
    pub mvm_noise_std: f64,
    /// Saturation level of the analog outputs.
    pub output_bound: f64,
    pub input_bits: u32,
    pub output_bits: u32,
    pub quantization_enabled: bool,
    pub noise_management: bool,
    pub bound_management: bool,
    /// Maximum number of halved-input retries under bound management.
    pub bound_management_retries: u32,
    /// Length of the stochastic pulse trains (coincidence trials per update).
    pub bit_length: u32,
}

impl Default for PeripheryConfig {
    fn default() -> Self {
        Self {
            mvm_noise_std: 0.06,
            output_bound: 12.0,
            input_bits: 7,
            output_bits: 9,
            quantization_enabled: true,
            noise_management: true,
            bound_management: true,
            bound_management_retries: 5,
            bit_length: 10,
        }
    }
}

/// Inputs are always presented on `[-1, 1]`.
pub const INPUT_RANGE: f64 = 1.0;

/// Upper limit on `bit_length`: pulse trains are packed into a `u128`.
pub const MAX_BIT_LENGTH: u32 = 128;

impl PeripheryConfig {
    /// Read noise and quantization disabled. Noise and bound management stay
    /// on: without noise they are exact rescalings that keep inputs in range.
    pub fn exact() -> Self {
        Self {
            mvm_noise_std: 0.0,
            quantization_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(format!("periphery: {m}")));
        if !(self.mvm_noise_std >= 0.0) {
            return bad(format!("mvm_noise_std = {} must be >= 0", self.mvm_noise_std));
        }
        if !(self.output_bound > 0.0) {
            return bad(format!("output_bound = {} must be > 0", self.output_bound));
        }
        if self.input_bits == 0 || self.output_bits == 0 || self.input_bits > 30 || self.output_bits > 30 {
            return bad("input_bits and output_bits must lie in 1..=30".into());
        }
        if self.bit_length == 0 || self.bit_length > MAX_BIT_LENGTH {
            return bad(format!("bit_length must lie in 1..={MAX_BIT_LENGTH}"));
        }
        Ok(())
    }
}

/// Uniform mid-tread quantizer on `[-range, range]`.
///
/// The grid has step `2*range / (2^bits - 1)` and always contains zero; values
/// are rounded to the nearest grid point and clamped to the range. Within the
/// range the error never exceeds half a step, and the map is idempotent.
#[derive(Debug, Clone, Copy)]
pub struct Quantizer<T> {
    step: T,
    range: T,
}

impl<T: Scalar> Quantizer<T> {
    pub fn new(bits: u32, range: T) -> Self {
        let levels = T::of(((1u64 << bits) - 1) as f64);
        Self {
            step: T::of(2.0) * range / levels,
            range,
        }
    }

    pub fn step(&self) -> T {
        self.step
    }

    #[inline]
    pub fn apply(&self, v: T) -> T {
        let q = (v / self.step).round() * self.step;
        q.max(-self.range).min(self.range)
    }
}
