//! Crossbar array of device pairs and its three parallel operations.

use std::io::{BufRead, Write};

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::device::{DeviceParams, DevicePopulationConfig, Direction};
use crate::error::{check_len, Result, SimError};
use crate::matrix::Matrix;
use crate::periphery::{PeripheryConfig, Quantizer, INPUT_RANGE};
use crate::rng::{gaussian, prob_threshold, SimRng};
use crate::Scalar;

/// How the outer-product update reaches the devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Stochastic pulse trains with coincidence detection.
    #[default]
    Stochastic,
    /// Deterministic expected device response, no pulsing or cycle noise.
    Expected,
}

/// Counters accumulated over the life of a tile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TileStats {
    pub forward_mvms: u64,
    pub backward_mvms: u64,
    pub updates: u64,
    pub pulses: u64,
    /// Pulse probabilities that exceeded one and were clamped.
    pub prob_clamps: u64,
    /// MVMs whose output still saturated after bound management gave up.
    pub bound_saturations: u64,
}

/// Static per-device parameters. The weight lives in a separate array so
/// the MVM loops stream contiguous memory.
#[derive(Debug, Clone, Copy)]
struct DeviceStatics<T> {
    dw_min0: T,
    slope_p: T,
    slope_n: T,
    w_s: T,
}

#[derive(Debug, Clone)]
pub struct AnalogTile<T> {
    rows: usize,
    cols: usize,
    statics: Vec<DeviceStatics<T>>,
    weights: Vec<T>,
    periphery: PeripheryConfig,
    dw_min_ref: T,
    cycle_noise: T,
    mode: UpdateMode,
    seed: u64,
    rng: SimRng,
    stats: TileStats,
    pulse_counts: Option<Vec<u64>>,
    calibrated: bool,
    q_in: Quantizer<T>,
    q_out: Quantizer<T>,
}

impl<T: Scalar> AnalogTile<T> {
    /// Sample an `rows x cols` array from the device population. All weights
    /// start at zero (each device at its reference).
    pub fn new(
        rows: usize,
        cols: usize,
        devices: &DevicePopulationConfig,
        periphery: PeripheryConfig,
        seed: u64,
    ) -> Result<Self> {
        devices.validate()?;
        let mut rng = SimRng::seed_from_u64(seed);
        let params: Vec<DeviceParams<T>> = (0..rows * cols).map(|_| devices.sample(&mut rng)).collect();
        Self::assemble(
            rows,
            cols,
            params,
            periphery,
            T::of(devices.dw_min0_mean),
            T::of(devices.cycle_noise_rel_std),
            seed,
            rng,
        )
    }

    /// Build from explicit devices (row-major). `dw_min_ref` is the step size
    /// the periphery assumes when converting update values into pulse rates.
    pub fn from_devices(
        rows: usize,
        cols: usize,
        devices: Vec<DeviceParams<T>>,
        periphery: PeripheryConfig,
        dw_min_ref: T,
        cycle_noise: T,
        seed: u64,
    ) -> Result<Self> {
        check_len("device grid", rows * cols, devices.len())?;
        Self::assemble(
            rows,
            cols,
            devices,
            periphery,
            dw_min_ref,
            cycle_noise,
            seed,
            SimRng::seed_from_u64(seed),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        rows: usize,
        cols: usize,
        devices: Vec<DeviceParams<T>>,
        periphery: PeripheryConfig,
        dw_min_ref: T,
        cycle_noise: T,
        seed: u64,
        rng: SimRng,
    ) -> Result<Self> {
        periphery.validate()?;
        if rows == 0 || cols == 0 {
            return Err(SimError::InvalidConfig(format!("empty tile {rows}x{cols}")));
        }
        if !(dw_min_ref > T::zero()) {
            return Err(SimError::InvalidConfig("reference step size must be > 0".into()));
        }
        let mut weights = Vec::with_capacity(devices.len());
        let statics = devices
            .iter()
            .map(|d| {
                weights.push(d.clamp(d.w));
                DeviceStatics {
                    dw_min0: d.dw_min0,
                    slope_p: d.slope_p,
                    slope_n: d.slope_n,
                    w_s: d.w_s,
                }
            })
            .collect();
        let q_in = Quantizer::new(periphery.input_bits, T::of(INPUT_RANGE));
        let q_out = Quantizer::new(periphery.output_bits, T::of(periphery.output_bound));
        Ok(Self {
            rows,
            cols,
            statics,
            weights,
            periphery,
            dw_min_ref,
            cycle_noise,
            mode: UpdateMode::Stochastic,
            seed,
            rng,
            stats: TileStats::default(),
            pulse_counts: None,
            calibrated: false,
            q_in,
            q_out,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn periphery(&self) -> &PeripheryConfig {
        &self.periphery
    }

    pub fn dw_min_ref(&self) -> T {
        self.dw_min_ref
    }

    pub fn cycle_noise(&self) -> T {
        self.cycle_noise
    }

    pub fn set_cycle_noise(&mut self, v: T) {
        self.cycle_noise = v;
    }

    pub fn update_mode(&self) -> UpdateMode {
        self.mode
    }

    pub fn set_update_mode(&mut self, mode: UpdateMode) {
        self.mode = mode;
    }

    pub fn stats(&self) -> TileStats {
        self.stats
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    /// Declare the symmetry points as already shifted to the reference.
    pub fn mark_calibrated(&mut self) {
        self.calibrated = true;
    }

    /// Start (or stop) recording per-device coincidence counts.
    pub fn track_pulse_counts(&mut self, on: bool) {
        self.pulse_counts = on.then(|| vec![0; self.rows * self.cols]);
    }

    pub fn pulse_counts(&self) -> Option<&[u64]> {
        self.pulse_counts.as_deref()
    }

    pub(crate) fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    /// Device pair at row `r`, column `c`, with its current weight.
    pub fn device(&self, r: usize, c: usize) -> DeviceParams<T> {
        self.device_at(self.idx(r, c))
    }

    #[inline]
    fn device_at(&self, k: usize) -> DeviceParams<T> {
        let s = &self.statics[k];
        DeviceParams {
            dw_min0: s.dw_min0,
            slope_p: s.slope_p,
            slope_n: s.slope_n,
            w_s: s.w_s,
            w: self.weights[k],
        }
    }

    pub fn devices(&self) -> impl Iterator<Item = DeviceParams<T>> + '_ {
        (0..self.weights.len()).map(move |k| self.device_at(k))
    }

    /// Overwrite one device's symmetry offset and weight.
    pub(crate) fn reset_device(&mut self, k: usize, w_s: T, w: T) {
        self.statics[k].w_s = w_s;
        let d = self.device_at(k);
        self.weights[k] = d.clamp(w);
    }

    pub(crate) fn len(&self) -> usize {
        self.weights.len()
    }

    /// Apply one pulse to device `k` using the tile's own random stream.
    #[inline]
    pub(crate) fn pulse_device(&mut self, k: usize, dir: Direction) {
        let mut d = self.device_at(k);
        d.apply_pulse(dir, self.cycle_noise, &mut self.rng);
        self.weights[k] = d.w;
    }

    /// Exact stored effective weights.
    pub fn read_weights(&self) -> Matrix<T> {
        Matrix::from_vec(self.rows, self.cols, self.weights.clone())
    }

    /// Store weights directly (clamped into each device's bounds).
    pub fn set_weights(&mut self, w: &Matrix<T>) -> Result<()> {
        check_len("set_weights rows", self.rows, w.rows())?;
        check_len("set_weights cols", self.cols, w.cols())?;
        for (k, &v) in w.as_slice().iter().enumerate() {
            let d = self.device_at(k);
            self.weights[k] = d.clamp(v);
        }
        Ok(())
    }

    /// Program target weights through iterated expected-value pulse writes.
    /// Targets outside a device's bounds end at the nearest bound.
    pub fn program_weights(&mut self, target: &Matrix<T>) -> Result<()> {
        check_len("program rows", self.rows, target.rows())?;
        check_len("program cols", self.cols, target.cols())?;
        let tol = T::epsilon() * T::of(16.0);
        for (k, &t) in target.as_slice().iter().enumerate() {
            let mut d = self.device_at(k);
            let goal = d.clamp(t);
            for _ in 0..64 {
                let diff = goal - d.w;
                if diff.abs() <= tol * (T::one() + goal.abs()) {
                    break;
                }
                let dir = if diff > T::zero() { Direction::Up } else { Direction::Down };
                let step = d.expected_step(dir);
                if !(step > T::zero()) {
                    break;
                }
                d.apply_expected(dir, diff.abs() / step);
            }
            self.weights[k] = d.w;
        }
        Ok(())
    }

    /// `y = W x` through the periphery.
    pub fn forward(&mut self, x: &[T]) -> Result<Vec<T>> {
        let noise = T::of(self.periphery.mvm_noise_std);
        self.forward_with_noise(x, noise)
    }

    /// Forward read with an explicit read-noise level.
    pub fn forward_with_noise(&mut self, x: &[T], noise: T) -> Result<Vec<T>> {
        check_len("forward input", self.cols, x.len())?;
        self.stats.forward_mvms += 1;
        Ok(self.managed_mvm(x, false, noise))
    }

    /// `z = W^T d` through the periphery.
    pub fn backward(&mut self, d: &[T]) -> Result<Vec<T>> {
        check_len("backward input", self.rows, d.len())?;
        self.stats.backward_mvms += 1;
        let noise = T::of(self.periphery.mvm_noise_std);
        Ok(self.managed_mvm(d, true, noise))
    }

    fn managed_mvm(&mut self, input: &[T], transpose: bool, noise: T) -> Vec<T> {
        let max_abs = input.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if max_abs == T::zero() {
            let zeros = vec![T::zero(); input.len()];
            let (y, _) = self.raw_mvm(&zeros, transpose, noise);
            return y;
        }
        let mut scale = if self.periphery.noise_management {
            max_abs
        } else {
            T::one()
        };
        let retries = if self.periphery.bound_management {
            self.periphery.bound_management_retries
        } else {
            0
        };
        let mut attempt = 0;
        loop {
            let scaled: Vec<T> = input.iter().map(|&v| v / scale).collect();
            let (mut y, saturated) = self.raw_mvm(&scaled, transpose, noise);
            if saturated && attempt < retries {
                attempt += 1;
                scale = scale * T::of(2.0);
                continue;
            }
            if saturated {
                self.stats.bound_saturations += 1;
            }
            if scale != T::one() {
                y.iter_mut().for_each(|v| *v = *v * scale);
            }
            return y;
        }
    }

    /// One physical read: DAC, analog MVM, read noise, clip, ADC.
    fn raw_mvm(&mut self, input: &[T], transpose: bool, noise: T) -> (Vec<T>, bool) {
        let range = T::of(INPUT_RANGE);
        let quantize = self.periphery.quantization_enabled;
        let xin: Vec<T> = input
            .iter()
            .map(|&v| {
                let v = v.max(-range).min(range);
                if quantize {
                    self.q_in.apply(v)
                } else {
                    v
                }
            })
            .collect();
        let mut y = if transpose {
            let mut out = vec![T::zero(); self.cols];
            for (r, &dr) in xin.iter().enumerate() {
                if dr == T::zero() {
                    continue;
                }
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += w * dr;
                }
            }
            out
        } else {
            self.weights
                .chunks_exact(self.cols)
                .map(|row| row.iter().zip(&xin).map(|(&w, &x)| w * x).sum())
                .collect()
        };
        let bound = T::of(self.periphery.output_bound);
        let mut saturated = false;
        for v in y.iter_mut() {
            if noise > T::zero() {
                *v += noise * gaussian::<T, _>(&mut self.rng);
            }
            if v.abs() >= bound {
                saturated = true;
                *v = v.signum() * bound;
            }
            if quantize {
                *v = self.q_out.apply(*v);
            }
        }
        (y, saturated)
    }

    /// Gradient-descent update `W <- W - eta * d x^T`, realized according to
    /// the tile's [`UpdateMode`].
    pub fn update(&mut self, x: &[T], d: &[T], eta: T) -> Result<()> {
        match self.mode {
            UpdateMode::Stochastic => self.stochastic_update(x, d, eta),
            UpdateMode::Expected => self.expected_update(x, d, eta),
        }
    }

    /// Pulse-coincidence update. Column `i` and row `j` each emit a train of
    /// `bit_length` Bernoulli pulses with probabilities `|x_i| s` and `|d_j| s`,
    /// `s = sqrt(eta / (BL dw_ref))`, so the expected coincidence count is
    /// `eta |x_i d_j| / dw_ref`. Devices with `x_i d_j < 0` are pulsed up in a
    /// first phase, those with `x_i d_j > 0` down in a second.
    pub fn stochastic_update(&mut self, x: &[T], d: &[T], eta: T) -> Result<()> {
        check_len("update x", self.cols, x.len())?;
        check_len("update d", self.rows, d.len())?;
        if !(eta > T::zero()) {
            return Err(SimError::InvalidConfig(format!("learning rate {eta} must be > 0")));
        }
        self.stats.updates += 1;
        let bl = self.periphery.bit_length;
        let s = (eta.as_f64() / (bl as f64 * self.dw_min_ref.as_f64())).sqrt();

        let (cols_pos, cols_neg) = self.draw_trains(x, s, bl);
        let (rows_pos, rows_neg) = self.draw_trains(d, s, bl);

        // Phase 1: x*d < 0 increases the weight.
        self.coincide(&rows_pos, &cols_neg, Direction::Up);
        self.coincide(&rows_neg, &cols_pos, Direction::Up);
        // Phase 2: x*d > 0 decreases it.
        self.coincide(&rows_pos, &cols_pos, Direction::Down);
        self.coincide(&rows_neg, &cols_neg, Direction::Down);
        Ok(())
    }

    /// Pulse trains for one side of the array, split by sign. Entries with an
    /// empty train are dropped.
    fn draw_trains(&mut self, v: &[T], s: f64, bl: u32) -> (Vec<(usize, u128)>, Vec<(usize, u128)>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let full: u128 = if bl == 128 { u128::MAX } else { (1u128 << bl) - 1 };
        for (i, &vi) in v.iter().enumerate() {
            let mut p = vi.abs().as_f64() * s;
            if p == 0.0 {
                continue;
            }
            let mask = if p >= 1.0 {
                if p > 1.0 {
                    self.stats.prob_clamps += 1;
                    p = 1.0;
                }
                debug_assert_eq!(p, 1.0);
                full
            } else {
                let thr = prob_threshold(p);
                let mut m = 0u128;
                for b in 0..bl {
                    if self.rng.next_u64() < thr {
                        m |= 1u128 << b;
                    }
                }
                m
            };
            if mask != 0 {
                if vi > T::zero() {
                    pos.push((i, mask));
                } else {
                    neg.push((i, mask));
                }
            }
        }
        (pos, neg)
    }

    fn coincide(&mut self, rows: &[(usize, u128)], cols: &[(usize, u128)], dir: Direction) {
        for &(r, rm) in rows {
            for &(c, cm) in cols {
                let n = (rm & cm).count_ones();
                if n == 0 {
                    continue;
                }
                let k = r * self.cols + c;
                for _ in 0..n {
                    self.pulse_device(k, dir);
                }
                self.stats.pulses += n as u64;
                if let Some(counts) = self.pulse_counts.as_mut() {
                    counts[k] += n as u64;
                }
            }
        }
    }

    /// Expected-value update: every device moves by the mean response of
    /// `eta |x_i d_j| / dw_ref` pulses in the descent direction.
    pub fn expected_update(&mut self, x: &[T], d: &[T], eta: T) -> Result<()> {
        check_len("update x", self.cols, x.len())?;
        check_len("update d", self.rows, d.len())?;
        self.stats.updates += 1;
        for (r, &dr) in d.iter().enumerate() {
            if dr == T::zero() {
                continue;
            }
            for (c, &xc) in x.iter().enumerate() {
                let grad = xc * dr;
                if grad == T::zero() {
                    continue;
                }
                let k = r * self.cols + c;
                let mut dev = self.device_at(k);
                let dir = if grad > T::zero() { Direction::Down } else { Direction::Up };
                dev.apply_expected(dir, eta * grad.abs() / self.dw_min_ref);
                self.weights[k] = dev.w;
            }
        }
        Ok(())
    }

    /// Write a row-major CSV weight dump with a `# rpu-tile` header line.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# rpu-tile rows={} cols={} seed={}", self.rows, self.cols, self.seed)?;
        for row in self.weights.chunks_exact(self.cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Parsed tile snapshot. Rebuilding the tile from the same population config
/// and `seed` reproduces the device parameters; the weights are then restored
/// with [`AnalogTile::set_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub weights: Matrix<f64>,
}

impl Snapshot {
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let err = |m: String| SimError::format("<snapshot>", m);
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| err("empty snapshot".into()))?
            .map_err(|e| SimError::io("<snapshot>", e))?;
        let rest = header
            .strip_prefix("# rpu-tile")
            .ok_or_else(|| err(format!("bad header `{header}`")))?;
        let (mut rows, mut cols, mut seed) = (None, None, None);
        for field in rest.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| err(format!("bad header field `{field}`")))?;
            let n: u64 = v.parse().map_err(|_| err(format!("bad header value `{field}`")))?;
            match k {
                "rows" => rows = Some(n as usize),
                "cols" => cols = Some(n as usize),
                "seed" => seed = Some(n),
                _ => return Err(err(format!("unknown header field `{k}`"))),
            }
        }
        let (rows, cols, seed) = match (rows, cols, seed) {
            (Some(r), Some(c), Some(s)) => (r, c, s),
            _ => return Err(err("header needs rows, cols and seed".into())),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for line in lines {
            let line = line.map_err(|e| SimError::io("<snapshot>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for tok in line.split(',') {
                data.push(tok.trim().parse::<f64>().map_err(|_| err(format!("bad weight `{tok}`")))?);
            }
            if data.len() - before != cols {
                return Err(err(format!("row has {} values, expected {cols}", data.len() - before)));
            }
        }
        if data.len() != rows * cols {
            return Err(err(format!("expected {} weights, found {}", rows * cols, data.len())));
        }
        Ok(Self {
            rows,
            cols,
            seed,
            weights: Matrix::from_vec(rows, cols, data),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn ideal_tile(rows: usize, cols: usize, w: &[f64], periphery: PeripheryConfig) -> AnalogTile<f64> {
        let devs = w
            .iter()
            .map(|&v| DeviceParams::new(0.001, 0.0, 0.0).with_weight(v))
            .collect();
        AnalogTile::from_devices(rows, cols, devs, periphery, 0.001, 0.0, 11).unwrap()
    }

    fn no_noise_no_mgmt() -> PeripheryConfig {
        PeripheryConfig {
            noise_management: false,
            bound_management: false,
            ..PeripheryConfig::exact()
        }
    }

    #[test]
    fn scalar_forward() {
        let mut t = ideal_tile(1, 1, &[0.5], PeripheryConfig::exact());
        assert_eq!(t.forward(&[1.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn output_clips_at_bound() {
        let mut t = ideal_tile(1, 20, &[1.0; 20], no_noise_no_mgmt());
        assert_eq!(t.forward(&[1.0; 20]).unwrap(), vec![12.0]);
        assert_eq!(t.stats().bound_saturations, 1);
    }

    #[test]
    fn bound_management_recovers_saturated_output() {
        let p = PeripheryConfig {
            bound_management: true,
            ..no_noise_no_mgmt()
        };
        let mut t = ideal_tile(1, 20, &[1.0; 20], p);
        assert_eq!(t.forward(&[1.0; 20]).unwrap(), vec![20.0]);
        assert_eq!(t.stats().bound_saturations, 0);
    }

    #[test]
    fn small_input_quantizes_to_zero() {
        let p = PeripheryConfig {
            quantization_enabled: true,
            ..no_noise_no_mgmt()
        };
        let mut t = ideal_tile(1, 1, &[1.0], p);
        assert_eq!(t.forward(&[0.004]).unwrap(), vec![0.0]);
    }

    #[test]
    fn backward_hand_value_and_transpose() {
        let mut t = ideal_tile(2, 1, &[0.3, -0.2], PeripheryConfig::exact());
        let z = t.backward(&[1.0, 1.0]).unwrap();
        assert!((z[0] - 0.1).abs() < 1e-15);

        let w: Vec<f64> = (0..12).map(|k| (k as f64 - 5.5) / 20.0).collect();
        let mut t = ideal_tile(3, 4, &w, PeripheryConfig::exact());
        let m = t.read_weights();
        let d = [0.3, -0.7, 0.1];
        let z = t.backward(&d).unwrap();
        let oracle = m.transpose().matvec(&d);
        for (a, b) in z.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_gives_read_noise_floor() {
        let p = PeripheryConfig {
            quantization_enabled: false,
            ..PeripheryConfig::default()
        };
        let mut t = ideal_tile(1, 3, &[0.2, 0.1, -0.4], p);
        let n = 10_000;
        let ys: Vec<f64> = (0..n).map(|_| t.backward(&[0.0]).unwrap()[0]).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((sd / 0.06 - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut t = ideal_tile(2, 3, &[0.0; 6], PeripheryConfig::exact());
        assert!(t.forward(&[1.0, 2.0]).is_err());
        assert!(t.backward(&[1.0, 2.0, 3.0]).is_err());
        assert!(t.update(&[1.0; 3], &[1.0; 3], 0.1).is_err());
    }

    #[test]
    fn zero_input_update_changes_nothing() {
        let mut t = ideal_tile(2, 2, &[0.1, 0.2, 0.3, 0.4], PeripheryConfig::exact());
        let before = t.read_weights();
        t.stochastic_update(&[0.0, 0.0], &[1.0, -1.0], 0.01).unwrap();
        assert_eq!(t.read_weights(), before);
        assert_eq!(t.stats().pulses, 0);
    }

    #[test]
    fn expected_update_is_sgd_on_ideal_devices() {
        let mut t = ideal_tile(2, 3, &[0.0; 6], PeripheryConfig::exact());
        t.set_update_mode(UpdateMode::Expected);
        let x = [0.5, -1.0, 0.25];
        let d = [0.2, -0.4];
        t.update(&x, &d, 0.01).unwrap();
        let mut oracle = Matrix::<f64>::zeros(2, 3);
        oracle.add_outer(-0.01, &d, &x);
        assert!(t.read_weights().max_abs_diff(&oracle) < 1e-15);
    }

    #[test]
    fn expected_update_on_asymmetric_device_is_restoring() {
        let dev = DeviceParams::<f64>::new(0.001, 1.66, 1.66).with_weight(0.2);
        let mut t: AnalogTile<f64> = AnalogTile::from_devices(1, 1, vec![dev], PeripheryConfig::exact(), 0.001, 0.0, 1).unwrap();
        t.expected_update(&[0.1], &[1.0], 0.01).unwrap();
        // one expected down pulse at w = 0.2: 0.2 - 0.001 * (1 + 1.66 * 0.2)
        assert!((t.read_weights().get(0, 0) - 0.198668).abs() < 1e-12);
    }

    #[test]
    fn single_pulse_read_back() {
        let mut t = ideal_tile(1, 1, &[0.0], PeripheryConfig::exact());
        assert_eq!(t.read_weights().as_slice(), &[0.0]);
        t.pulse_device(0, Direction::Up);
        assert!((t.read_weights().get(0, 0) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn linearity_and_duality_without_noise() {
        let mut rng = substream(9, &[]);
        let w: Vec<f64> = (0..20).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut t = ideal_tile(4, 5, &w, PeripheryConfig::exact());
        let x1: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let y1 = t.forward(&x1).unwrap();
        let y2 = t.forward(&x2).unwrap();
        let ym = t.forward(&mix).unwrap();
        for k in 0..4 {
            assert!((ym[k] - (a * y1[k] + b * y2[k])).abs() < 1e-12, "{} vs {}", ym[k], a * y1[k] + b * y2[k]);
        }
        let d: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = d.iter().zip(&y1).map(|(p, q)| p * q).sum();
        let z = t.backward(&d).unwrap();
        let rhs: f64 = z.iter().zip(&x1).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn probability_clamp_is_counted() {
        let mut t = ideal_tile(1, 1, &[0.0], PeripheryConfig::exact());
        // s = sqrt(1 / (10 * 0.001)) = 10, so |x| = 0.5 gives p = 5
        t.stochastic_update(&[0.5], &[0.05], 1.0).unwrap();
        assert_eq!(t.stats().prob_clamps, 1);
    }

    #[test]
    fn stochastic_update_is_unbiased_on_ideal_devices() {
        let mut t = ideal_tile(2, 2, &[0.0; 4], PeripheryConfig::exact());
        let x = [0.8, -0.3];
        let d = [0.5, 0.9];
        let eta = 0.01;
        let n = 100_000;
        for _ in 0..n {
            t.stochastic_update(&x, &d, eta).unwrap();
        }
        let w = t.read_weights();
        for r in 0..2 {
            for c in 0..2 {
                let per = w.get(r, c) / n as f64;
                let expect = -eta * x[c] * d[r];
                // Poisson-binomial count: var <= mean, in units of dw.
                let mean_pulses = (expect / 0.001).abs();
                let sigma = 0.001 * (mean_pulses / n as f64).sqrt();
                assert!((per - expect).abs() < 3.0 * sigma + 1e-15, "({r},{c}) {per} vs {expect}");
            }
        }
        assert_eq!(t.stats().prob_clamps, 0);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut t: AnalogTile<f64> =
            AnalogTile::new(3, 2, &DevicePopulationConfig::baseline(), PeripheryConfig::default(), 42).unwrap();
        t.program_weights(&Matrix::from_fn(3, 2, |r, c| 0.1 * r as f64 - 0.05 * c as f64)).unwrap();
        let mut buf = Vec::new();
        t.write_snapshot(&mut buf).unwrap();
        let snap = Snapshot::read(&buf[..]).unwrap();
        assert_eq!((snap.rows, snap.cols, snap.seed), (3, 2, 42));
        let mut restored: AnalogTile<f64> =
            AnalogTile::new(3, 2, &DevicePopulationConfig::baseline(), PeripheryConfig::default(), 42).unwrap();
        restored.set_weights(&snap.weights).unwrap();
        assert_eq!(restored.read_weights(), t.read_weights());
        assert!(Snapshot::read(&b"# rpu-tile rows=1 cols=2 seed=0\n0.1\n"[..]).is_err());
    }

    #[test]
    fn programming_reaches_targets_within_bounds() {
        let mut t: AnalogTile<f64> =
            AnalogTile::new(4, 4, &DevicePopulationConfig::baseline(), PeripheryConfig::default(), 5).unwrap();
        let target = Matrix::from_fn(4, 4, |r, c| (r as f64 - c as f64) * 0.08);
        t.program_weights(&target).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let d = t.device(r, c);
                let goal = d.clamp(target.get(r, c));
                assert!((d.w - goal).abs() < 1e-12);
            }
        }
    }
}
