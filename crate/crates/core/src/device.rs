//! Single cross-point device pair with state-dependent, asymmetric switching.
//!
//! Weights are expressed directly in effective weight units: the gain between
//! conductance difference and weight is fixed to one, and the reference device
//! only shows up through the symmetry-point offset `w_s`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::gaussian;
use crate::Scalar;

/// Pulse polarity. `Up` increases the effective weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Direction::Up => T::one(),
            Direction::Down => -T::one(),
        }
    }
}

/// Population statistics from which every device of an array is drawn.
///
/// Standard deviations of the step size and slopes are relative to their
/// means; the symmetry-point offset std is absolute (weight units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DevicePopulationConfig {
    pub dw_min0_mean: f64,
    pub slope_p_mean: f64,
    pub slope_n_mean: f64,
    pub dw_min0_rel_std: f64,
    pub slope_p_rel_std: f64,
    pub slope_n_rel_std: f64,
    pub cycle_noise_rel_std: f64,
    pub symmetry_offset_std: f64,
}

impl Default for DevicePopulationConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

impl DevicePopulationConfig {
    /// Asymmetric baseline: linear branches with slope 1.66, 30/25/25 %
    /// device-to-device spread and 30 % cycle-to-cycle noise.
    pub fn baseline() -> Self {
        Self {
            dw_min0_mean: 0.001,
            slope_p_mean: 1.66,
            slope_n_mean: 1.66,
            dw_min0_rel_std: 0.30,
            slope_p_rel_std: 0.25,
            slope_n_rel_std: 0.25,
            cycle_noise_rel_std: 0.30,
            symmetry_offset_std: 0.0,
        }
    }

    /// Baseline variations but perfectly symmetric (state-independent) steps.
    pub fn symmetric() -> Self {
        Self {
            slope_p_mean: 0.0,
            slope_n_mean: 0.0,
            slope_p_rel_std: 0.0,
            slope_n_rel_std: 0.0,
            ..Self::baseline()
        }
    }

    /// Identical, noiseless, linear devices.
    pub fn ideal() -> Self {
        Self {
            dw_min0_mean: 0.001,
            slope_p_mean: 0.0,
            slope_n_mean: 0.0,
            dw_min0_rel_std: 0.0,
            slope_p_rel_std: 0.0,
            slope_n_rel_std: 0.0,
            cycle_noise_rel_std: 0.0,
            symmetry_offset_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(format!("device: {msg}")));
        if !(self.dw_min0_mean > 0.0) {
            return bad("dw_min0_mean must be > 0");
        }
        // Zero slopes describe linear devices; negative means are not sampleable.
        if !(self.slope_p_mean >= 0.0 && self.slope_n_mean >= 0.0) {
            return bad("slope means must be >= 0");
        }
        for (name, v) in [
            ("dw_min0_rel_std", self.dw_min0_rel_std),
            ("slope_p_rel_std", self.slope_p_rel_std),
            ("slope_n_rel_std", self.slope_n_rel_std),
            ("cycle_noise_rel_std", self.cycle_noise_rel_std),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(SimError::InvalidConfig(format!(
                    "device: {name} = {v} must lie in [0, 1)"
                )));
            }
        }
        if !(self.symmetry_offset_std >= 0.0) {
            return bad("symmetry_offset_std must be >= 0");
        }
        Ok(())
    }

    /// Draw one device. The initial weight is zero.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> DeviceParams<T> {
        let dw_min0 = positive_draw(self.dw_min0_mean, self.dw_min0_rel_std, rng);
        let slope_p = positive_draw(self.slope_p_mean, self.slope_p_rel_std, rng);
        let slope_n = positive_draw(self.slope_n_mean, self.slope_n_rel_std, rng);
        let w_s = if self.symmetry_offset_std > 0.0 {
            self.symmetry_offset_std * gaussian::<f64, _>(rng)
        } else {
            0.0
        };
        DeviceParams {
            dw_min0: T::of(dw_min0),
            slope_p: T::of(slope_p),
            slope_n: T::of(slope_n),
            w_s: T::of(w_s),
            w: T::zero(),
        }
    }
}

/// Gaussian draw around `mean` with relative spread, redrawn until positive.
fn positive_draw<R: Rng + ?Sized>(mean: f64, rel_std: f64, rng: &mut R) -> f64 {
    if mean == 0.0 || rel_std == 0.0 {
        return mean;
    }
    loop {
        let v = mean * (1.0 + rel_std * gaussian::<f64, _>(rng));
        if v > 0.0 {
            return v;
        }
    }
}

/// Sampled parameters and current state of one differential device pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams<T> {
    /// Step size at the symmetry point.
    pub dw_min0: T,
    pub slope_p: T,
    pub slope_n: T,
    /// Symmetry-point offset of the effective weight.
    pub w_s: T,
    /// Current effective weight.
    pub w: T,
}

impl<T: Scalar> DeviceParams<T> {
    pub fn new(dw_min0: T, slope_p: T, slope_n: T) -> Self {
        Self {
            dw_min0,
            slope_p,
            slope_n,
            w_s: T::zero(),
            w: T::zero(),
        }
    }

    pub fn with_weight(mut self, w: T) -> Self {
        self.w = w;
        self
    }

    pub fn with_offset(mut self, w_s: T) -> Self {
        self.w_s = w_s;
        self
    }

    /// Upper saturation bound; infinite for a non-positive up-slope.
    pub fn w_hi(&self) -> T {
        if self.slope_p > T::zero() {
            self.w_s + self.slope_p.recip()
        } else {
            T::infinity()
        }
    }

    /// Lower saturation bound; infinite for a non-positive down-slope.
    pub fn w_lo(&self) -> T {
        if self.slope_n > T::zero() {
            self.w_s - self.slope_n.recip()
        } else {
            T::neg_infinity()
        }
    }

    pub fn clamp(&self, w: T) -> T {
        w.max(self.w_lo()).min(self.w_hi())
    }

    /// Expected step magnitude of one pulse at weight `w`.
    #[inline]
    pub fn step_at(&self, dir: Direction, w: T) -> T {
        let x = w - self.w_s;
        match dir {
            Direction::Up => self.dw_min0 * (T::one() - self.slope_p * x),
            Direction::Down => self.dw_min0 * (T::one() + self.slope_n * x),
        }
    }

    /// Expected step magnitude at the current weight.
    #[inline]
    pub fn expected_step(&self, dir: Direction) -> T {
        self.step_at(dir, self.w)
    }

    /// Apply one pulse with multiplicative cycle-to-cycle noise. The noisy
    /// magnitude never changes sign and the result stays inside the bounds.
    #[inline]
    pub fn apply_pulse<R: Rng + ?Sized>(&mut self, dir: Direction, cycle_noise: T, rng: &mut R) {
        let mut step = self.expected_step(dir).max(T::zero());
        if cycle_noise > T::zero() {
            step = step * (T::one() + cycle_noise * gaussian::<T, _>(rng)).max(T::zero());
        }
        self.w = self.clamp(self.w + dir.sign::<T>() * step);
    }

    /// Deterministic equivalent of `pulses` (possibly fractional) pulses.
    pub fn apply_expected(&mut self, dir: Direction, pulses: T) {
        let step = self.expected_step(dir).max(T::zero());
        self.w = self.clamp(self.w + dir.sign::<T>() * pulses * step);
    }

    /// Symmetric and antisymmetric combinations of the branch steps at `w`,
    /// normalized by this device's own step size:
    /// `F = (up + down) / 2dw`, `G = (up - down) / 2dw`.
    ///
    /// With this sign convention the realized update for a gradient `dw` is
    /// `w - eta*dw*F + eta*|dw|*G`; for the linear baseline `G = -slope*(w - w_s)`,
    /// which pulls the weight back toward its symmetry point.
    pub fn fg_decompose(&self, w: T) -> (T, T) {
        let up = self.step_at(Direction::Up, w);
        let down = self.step_at(Direction::Down, w);
        let two = T::of(2.0) * self.dw_min0;
        ((up + down) / two, (up - down) / two)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn baseline_device(w: f64) -> DeviceParams<f64> {
        DeviceParams::new(0.001, 1.66, 1.66).with_weight(w)
    }

    #[test]
    fn zero_variance_reproduces_means() {
        let cfg = DevicePopulationConfig {
            dw_min0_rel_std: 0.0,
            slope_p_rel_std: 0.0,
            slope_n_rel_std: 0.0,
            ..DevicePopulationConfig::baseline()
        };
        let mut rng = substream(1, &[]);
        for _ in 0..100 {
            let d: DeviceParams<f64> = cfg.sample(&mut rng);
            assert_eq!((d.dw_min0, d.slope_p, d.slope_n, d.w_s, d.w), (0.001, 1.66, 1.66, 0.0, 0.0));
        }
    }

    #[test]
    fn baseline_population_statistics() {
        let cfg = DevicePopulationConfig::baseline();
        let mut rng = substream(2, &[]);
        let n = 100_000;
        let devs: Vec<DeviceParams<f64>> = (0..n).map(|_| cfg.sample(&mut rng)).collect();
        let mean = devs.iter().map(|d| d.dw_min0).sum::<f64>() / n as f64;
        // std of the mean is 0.3e-3 / sqrt(1e5) ~ 1e-6; rejection shifts it by < 1e-7.
        assert!((mean - 0.001).abs() < 5e-6, "mean dw_min0 {mean}");
        assert!(devs.iter().all(|d| d.dw_min0 > 0.0 && d.slope_p > 0.0 && d.slope_n > 0.0));
    }

    #[test]
    fn symmetry_offset_spread() {
        let cfg = DevicePopulationConfig {
            symmetry_offset_std: 0.01,
            ..DevicePopulationConfig::baseline()
        };
        let mut rng = substream(3, &[]);
        let n = 100_000;
        let ws: Vec<f64> = (0..n).map(|_| cfg.sample::<f64, _>(&mut rng).w_s).collect();
        let m = ws.iter().sum::<f64>() / n as f64;
        let sd = (ws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd - 0.01).abs() < 0.0001, "std {sd}");
    }

    #[test]
    fn branch_formula_values() {
        let d = baseline_device(0.0);
        assert_eq!(d.expected_step(Direction::Up), 0.001);
        assert_eq!(d.expected_step(Direction::Down), 0.001);
        let d = baseline_device(0.5);
        assert!((d.expected_step(Direction::Up) - 0.00017).abs() < 1e-15);

        let ideal = DeviceParams::new(0.001, 0.0, 0.0).with_weight(0.37);
        assert_eq!(ideal.expected_step(Direction::Up), 0.001);
        assert_eq!(ideal.expected_step(Direction::Down), 0.001);
        assert_eq!(ideal.w_hi(), f64::INFINITY);
    }

    #[test]
    fn noiseless_pulse_and_saturation() {
        let mut rng = substream(4, &[]);
        let mut ideal = DeviceParams::<f64>::new(0.001, 0.0, 0.0).with_weight(0.2);
        ideal.apply_pulse(Direction::Up, 0.0, &mut rng);
        assert!((ideal.w - 0.201).abs() < 1e-15);

        let mut d = baseline_device(0.0);
        d.w = d.w_hi();
        let before = d.w;
        d.apply_pulse(Direction::Up, 0.3, &mut rng);
        assert_eq!(d.w, before);
    }

    #[test]
    fn pulse_moments_match_expectation() {
        let d = baseline_device(0.1);
        let expected = d.expected_step(Direction::Up);
        let mut rng = substream(5, &[]);
        let n = 100_000;
        let steps: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = d;
                x.apply_pulse(Direction::Up, 0.3, &mut rng);
                x.w - d.w
            })
            .collect();
        let mean = steps.iter().sum::<f64>() / n as f64;
        let sd = (steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.01, "mean ratio {}", mean / expected);
        assert!((sd / (0.3 * expected) - 1.0).abs() < 0.03, "std ratio {}", sd / (0.3 * expected));
    }

    #[test]
    fn fg_archetypes() {
        for &w in &[-0.4, -0.1, 0.0, 0.25, 0.5] {
            let (f, g) = DeviceParams::<f64>::new(0.001, 0.0, 0.0).fg_decompose(w);
            assert_eq!((f, g), (1.0, 0.0));

            // symmetric nonlinear: both branches shrink as w grows
            let (f, g) = DeviceParams::<f64>::new(0.001, 1.66, -1.66).fg_decompose(w);
            assert!((f - (1.0 - 1.66 * w)).abs() < 1e-12);
            assert!(g.abs() < 1e-12);

            let (f, g) = baseline_device(0.0).fg_decompose(w);
            assert!((f - 1.0).abs() < 1e-12);
            assert!((g + 1.66 * w).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_approach_to_upper_bound() {
        // Scalar recurrence oracle vs closed form w_n = w_hi - (w_hi - w_0)(1 - dw*s)^n.
        let mut rng = substream(6, &[]);
        let mut d = baseline_device(0.0).with_offset(0.05);
        d.w = d.w_s;
        let w_hi = d.w_hi();
        let mut brute = d.w;
        for n in 1..=3000 {
            d.apply_pulse(Direction::Up, 0.0, &mut rng);
            brute += 0.001 * (1.0 - 1.66 * (brute - 0.05));
            let closed = w_hi - (w_hi - 0.05) * (1.0 - 0.001 * 1.66_f64).powi(n);
            assert!((d.w - brute).abs() <= 1e-6 * brute.abs());
            assert!((closed - brute).abs() <= 1e-6 * brute.abs(), "n={n}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = DevicePopulationConfig::baseline();
        c.dw_min0_mean = 0.0;
        assert!(c.validate().is_err());
        let mut c = DevicePopulationConfig::baseline();
        c.cycle_noise_rel_std = 1.0;
        assert!(c.validate().is_err());
        assert!(DevicePopulationConfig::ideal().validate().is_ok());
    }
}
