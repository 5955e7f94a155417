//! Minibatch-1 training loops for the float reference, analog SGD and
//! Tiki-Taka modes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{Network, Sample, Target, WeightBackend};
use super::spec::NetworkSpec;
use crate::calibration::{calibrate, CalibrationConfig, OffsetStats};
use crate::data::LabeledSet;
use crate::device::DevicePopulationConfig;
use crate::error::{Result, SimError};
use crate::matrix::Matrix;
use crate::periphery::PeripheryConfig;
use crate::rng::{substream, substream_seed, SimRng};
use crate::tiki_taka::{TikiTakaConfig, TikiTakaLayer};
use crate::tile::{AnalogTile, UpdateMode};
use crate::Scalar;

const STREAM_INIT: u64 = 1;
const STREAM_TILE: u64 = 2;
const STREAM_ORDER: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Fp,
    AnalogSgd,
    AnalogTikiTaka,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub mode: TrainMode,
    pub eta: f64,
    pub epochs: u32,
    /// Characters per truncated back-propagation window.
    pub unroll_steps: usize,
    pub update_mode: UpdateMode,
    /// Train Tiki-Taka layers whose `A` array skipped calibration.
    pub allow_uncalibrated: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Fp,
            eta: 0.01,
            epochs: 1,
            unroll_steps: 100,
            update_mode: UpdateMode::Stochastic,
            allow_uncalibrated: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(SimError::InvalidConfig(format!("trainer: eta = {} must be > 0", self.eta)));
        }
        if self.unroll_steps == 0 {
            return Err(SimError::InvalidConfig("trainer: unroll_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything about the arrays a network is mapped onto.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hardware {
    pub device: DevicePopulationConfig,
    pub periphery: PeripheryConfig,
    pub tiki: TikiTakaConfig,
    /// Per-layer overrides of `tiki`; missing entries fall back to it.
    pub tiki_layers: Vec<TikiTakaConfig>,
    pub calibration: CalibrationConfig,
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, fan-in counting the bias.
pub fn initial_weights<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Vec<Matrix<T>> {
    spec.matrix_shapes()
        .into_iter()
        .enumerate()
        .map(|(l, (r, c))| {
            let mut rng = substream(seed, &[STREAM_INIT, l as u64]);
            let b = 1.0 / (c as f64).sqrt();
            Matrix::from_fn(r, c, |_, _| T::of(rng.random_range(-b..=b)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Mean loss over the predictions of the sample.
    pub loss: f64,
    pub transfers: u64,
}

/// Calibration outcome of one Tiki-Taka `A` array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReport {
    pub layer: usize,
    pub driven: OffsetStats,
    pub transferred: OffsetStats,
}

#[derive(Debug, Clone)]
pub struct Trainer<T> {
    net: Network<T>,
    cfg: TrainerConfig,
    order_rng: SimRng,
    calibration: Vec<CalibrationReport>,
}

impl<T: Scalar> Trainer<T> {
    /// Map `spec` onto the backend selected by `cfg.mode`, program the
    /// initial weights and, for Tiki-Taka, calibrate every `A` array.
    pub fn build(spec: NetworkSpec, cfg: TrainerConfig, hw: &Hardware, seed: u64) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let init = initial_weights::<T>(&spec, seed);
        let mut backends = Vec::with_capacity(init.len());
        let mut reports = Vec::new();
        if cfg.mode != TrainMode::Fp {
            hw.device.validate()?;
            hw.periphery.validate()?;
        }
        for (l, w0) in init.into_iter().enumerate() {
            let (r, c) = (w0.rows(), w0.cols());
            let tile = |k: u64| -> Result<AnalogTile<T>> {
                let mut t = AnalogTile::new(
                    r,
                    c,
                    &hw.device,
                    hw.periphery.clone(),
                    substream_seed(seed, &[STREAM_TILE, l as u64, k]),
                )?;
                t.set_update_mode(cfg.update_mode);
                Ok(t)
            };
            backends.push(match cfg.mode {
                TrainMode::Fp => WeightBackend::Digital(w0),
                TrainMode::AnalogSgd => {
                    let mut t = tile(0)?;
                    t.program_weights(&w0)?;
                    WeightBackend::Analog(t)
                }
                TrainMode::AnalogTikiTaka => {
                    let tc = hw.tiki_layers.get(l).unwrap_or(&hw.tiki).clone();
                    let mut a = tile(0)?;
                    let mut cm = tile(1)?;
                    if hw.calibration.enabled {
                        let prog = hw
                            .calibration
                            .programming_error_std
                            .unwrap_or(hw.device.symmetry_offset_std);
                        let (driven, transferred) = calibrate(&mut a, hw.calibration.n_pairs, prog)?;
                        reports.push(CalibrationReport {
                            layer: l,
                            driven,
                            transferred,
                        });
                    }
                    cm.program_weights(&w0)?;
                    WeightBackend::TikiTaka(TikiTakaLayer::new(a, cm, tc)?)
                }
            });
        }
        let net = Network::new(spec, backends)?;
        Ok(Self::from_network(net, cfg, seed).with_reports(reports))
    }

    /// Train an existing network; `seed` only drives the sample order.
    pub fn from_network(net: Network<T>, cfg: TrainerConfig, seed: u64) -> Self {
        Self {
            net,
            cfg,
            order_rng: substream(seed, &[STREAM_ORDER]),
            calibration: Vec::new(),
        }
    }

    fn with_reports(mut self, r: Vec<CalibrationReport>) -> Self {
        self.calibration = r;
        self
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.net
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn calibration_reports(&self) -> &[CalibrationReport] {
        &self.calibration
    }

    /// Forward, backward, update and (Tiki-Taka) transfer for one sample.
    pub fn train_step(&mut self, sample: Sample<'_, T>) -> Result<StepMetrics> {
        if !self.cfg.allow_uncalibrated {
            if let Some(l) = self
                .net
                .layers()
                .iter()
                .position(|l| l.weights().is_uncalibrated_tiki_taka())
            {
                return Err(SimError::Uncalibrated { layer: l });
            }
        }
        let pass = self.net.forward_backward(sample)?;
        let transfers = self.net.apply_updates(&pass, T::of(self.cfg.eta))?;
        Ok(StepMetrics {
            loss: pass.mean_loss().as_f64(),
            transfers,
        })
    }

    /// One shuffled pass; returns the mean training loss.
    pub fn train_epoch_labeled(&mut self, set: &LabeledSet) -> Result<f64> {
        if set.is_empty() {
            return Err(SimError::EmptyDataset("training set".into()));
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut self.order_rng);
        let mut total = 0.0;
        let mut x = Vec::with_capacity(set.features());
        for i in order {
            x.clear();
            x.extend(set.sample(i).iter().map(|&v| T::of(f64::from(v))));
            total += self
                .train_step(Sample::Vector {
                    input: &x,
                    target: Target::Class(set.label(i)),
                })?
                .loss;
        }
        Ok(total / set.len() as f64)
    }

    /// Classification error in percent.
    pub fn evaluate_labeled(&mut self, set: &LabeledSet) -> Result<f64> {
        if set.is_empty() {
            return Err(SimError::EmptyDataset("test set".into()));
        }
        let mut wrong = 0usize;
        let mut x = Vec::with_capacity(set.features());
        for i in 0..set.len() {
            x.clear();
            x.extend(set.sample(i).iter().map(|&v| T::of(f64::from(v))));
            let p = self.net.score(Sample::Vector {
                input: &x,
                target: Target::Class(set.label(i)),
            })?;
            wrong += 1 - p.correct;
        }
        Ok(100.0 * wrong as f64 / set.len() as f64)
    }

    /// Windows of `unroll_steps` characters in shuffled order; returns the
    /// mean per-character cross-entropy.
    pub fn train_epoch_text(&mut self, chars: &[usize]) -> Result<f64> {
        let mut windows = text_windows(chars.len(), self.cfg.unroll_steps)?;
        windows.shuffle(&mut self.order_rng);
        let (mut total, mut count) = (0.0, 0usize);
        for (s, n) in windows {
            let m = self.train_step(Sample::Sequence {
                inputs: &chars[s..s + n],
                targets: &chars[s + 1..s + n + 1],
            })?;
            total += m.loss * n as f64;
            count += n;
        }
        Ok(total / count as f64)
    }

    /// Mean per-character cross-entropy with state reset every window.
    pub fn evaluate_text(&mut self, chars: &[usize]) -> Result<f64> {
        let windows = text_windows(chars.len(), self.cfg.unroll_steps)?;
        let (mut total, mut count) = (0.0, 0usize);
        for (s, n) in windows {
            let p = self.net.score(Sample::Sequence {
                inputs: &chars[s..s + n],
                targets: &chars[s + 1..s + n + 1],
            })?;
            total += p.loss.as_f64();
            count += n;
        }
        Ok(total / count as f64)
    }
}

/// `(start, len)` windows covering every next-character prediction once.
fn text_windows(len: usize, unroll: usize) -> Result<Vec<(usize, usize)>> {
    if len < 2 {
        return Err(SimError::EmptyDataset("text needs at least two characters".into()));
    }
    let preds = len - 1;
    Ok((0..preds).step_by(unroll).map(|s| (s, unroll.min(preds - s))).collect())
}
