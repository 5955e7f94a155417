//! Coupled-matrix training: each layer weight is `W = gamma*A + C`.
//!
//! Gradients are accumulated on the fast, calibrated array `A`. Every `ns`
//! samples one probe vector `u_t` reads `v = A u_t` and the rank-one update
//! `C += lambda * v u_t^T` moves that information into the slow array `C`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SimError};
use crate::matrix::Matrix;
use crate::tile::AnalogTile;
use crate::Scalar;

/// Probe vectors used for the transfer read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransferVectors {
    /// Columns of the identity, cycled.
    OneHot,
    /// Rows of a Sylvester Hadamard matrix of order `k` (a power of two),
    /// placed on consecutive `k`-blocks and padded with zeros.
    Hadamard(usize),
}

impl fmt::Display for TransferVectors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransferVectors::OneHot => f.write_str("one_hot"),
            TransferVectors::Hadamard(k) => write!(f, "hadamard{k}"),
        }
    }
}

impl FromStr for TransferVectors {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "one_hot" {
            return Ok(TransferVectors::OneHot);
        }
        if let Some(k) = s.strip_prefix("hadamard").and_then(|k| k.parse::<usize>().ok()) {
            if k >= 2 && k.is_power_of_two() {
                return Ok(TransferVectors::Hadamard(k));
            }
        }
        Err(SimError::Config(format!(
            "transfer_vectors `{s}`: expected one_hot or hadamard<k> with k a power of two >= 2"
        )))
    }
}

impl TryFrom<String> for TransferVectors {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TransferVectors> for String {
    fn from(v: TransferVectors) -> String {
        v.to_string()
    }
}

/// Entry magnitude of the Hadamard probe vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HadamardNorm {
    /// `±1/k`, e.g. `[1/2, 1/2, 0, 0, ...]` for `k = 2`.
    #[default]
    Literal,
    /// `±1/sqrt(k)`: unit-norm probes.
    UnitNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TikiTakaConfig {
    pub gamma: f64,
    pub lambda_c: f64,
    /// Training samples between consecutive transfers.
    pub ns: u32,
    pub transfer_vectors: TransferVectors,
    pub hadamard_norm: HadamardNorm,
    /// Transfer reads with `|v| <= threshold_tv` are dropped; 0 disables.
    pub threshold_tv: f64,
    /// Read noise of the transfer read; defaults to the periphery noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer_read_noise_std: Option<f64>,
}

impl Default for TikiTakaConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda_c: 0.02,
            ns: 1,
            transfer_vectors: TransferVectors::OneHot,
            hadamard_norm: HadamardNorm::Literal,
            threshold_tv: 0.0,
            transfer_read_noise_std: None,
        }
    }
}

impl TikiTakaConfig {
    /// `lambda_c = 0` is accepted and disables the C update entirely.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(format!("tiki: {m}")));
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma = {} must be >= 0", self.gamma));
        }
        if !(self.lambda_c >= 0.0) {
            return bad(format!("lambda_c = {} must be >= 0", self.lambda_c));
        }
        if self.ns == 0 {
            return bad("ns must be >= 1".into());
        }
        if !(self.threshold_tv >= 0.0) {
            return bad("threshold_tv must be >= 0".into());
        }
        if let Some(s) = self.transfer_read_noise_std {
            if !(s >= 0.0) {
                return bad("transfer_read_noise_std must be >= 0".into());
            }
        }
        Ok(())
    }
}

/// `f(v) = v` if `|v| > tv`, else 0.
#[inline]
pub fn threshold_filter<T: Scalar>(v: T, tv: T) -> T {
    if v.abs() > tv {
        v
    } else {
        T::zero()
    }
}

/// Cyclic generator of transfer probe vectors over `n` coordinates.
#[derive(Debug, Clone)]
pub struct TransferVectorGen {
    kind: TransferVectors,
    norm: HadamardNorm,
    n: usize,
    t: usize,
}

impl TransferVectorGen {
    pub fn new(kind: TransferVectors, norm: HadamardNorm, n: usize) -> Self {
        assert!(n >= 1, "transfer vectors need n >= 1");
        Self { kind, norm, n, t: 0 }
    }

    fn block(&self) -> usize {
        match self.kind {
            TransferVectors::OneHot => 1,
            TransferVectors::Hadamard(k) => k,
        }
    }

    /// Number of distinct vectors before the sequence repeats: `n` rounded
    /// up to a whole number of blocks.
    pub fn period(&self) -> usize {
        self.n.div_ceil(self.block()) * self.block()
    }

    /// Index of the next vector within the period.
    pub fn position(&self) -> usize {
        self.t
    }

    pub fn next_vector<T: Scalar>(&mut self) -> Vec<T> {
        let v = self.vector_at(self.t);
        self.t = (self.t + 1) % self.period();
        v
    }

    /// Vector `t` of the cycle, ordered block-major then pattern. The
    /// coordinates are zero-padded to whole `k`-blocks and the padding is
    /// dropped, so a trailing partial block still sums to `I / k`.
    pub fn vector_at<T: Scalar>(&self, t: usize) -> Vec<T> {
        let k = self.block();
        let (blk, pattern) = ((t % self.period()) / k, t % k);
        let mag = match (k, self.norm) {
            (1, _) => T::one(),
            (_, HadamardNorm::Literal) => T::one() / T::of(k as f64),
            (_, HadamardNorm::UnitNorm) => T::one() / T::of(k as f64).sqrt(),
        };
        let mut v = vec![T::zero(); self.n];
        for j in 0..k.min(self.n - blk * k) {
            // Sylvester construction: H[p][j] = (-1)^popcount(p & j)
            v[blk * k + j] = if (pattern & j).count_ones() % 2 == 0 { mag } else { -mag };
        }
        v
    }
}

/// Which training algorithm a cycle count refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleMode {
    Sgd,
    TikiTaka,
}

/// Array cycles spent on one layer: three per weight-sharing repetition per
/// sample, plus a forward-A and an update-C cycle per transfer.
pub fn cycle_count(mode: CycleMode, ns: u64, samples: u64, weight_sharing: u64) -> u64 {
    let base = 3 * weight_sharing * samples;
    match mode {
        CycleMode::Sgd => base,
        CycleMode::TikiTaka => base + 2 * (samples / ns.max(1)),
    }
}

#[derive(Debug, Clone)]
pub struct TikiTakaLayer<T> {
    a: AnalogTile<T>,
    c: AnalogTile<T>,
    cfg: TikiTakaConfig,
    sample_counter: u32,
    gen: TransferVectorGen,
    transfers: u64,
}

impl<T: Scalar> TikiTakaLayer<T> {
    pub fn new(a: AnalogTile<T>, c: AnalogTile<T>, cfg: TikiTakaConfig) -> Result<Self> {
        cfg.validate()?;
        check_len("tiki-taka A/C rows", a.rows(), c.rows())?;
        check_len("tiki-taka A/C cols", a.cols(), c.cols())?;
        let gen = TransferVectorGen::new(cfg.transfer_vectors, cfg.hadamard_norm, a.cols());
        Ok(Self {
            a,
            c,
            cfg,
            sample_counter: 0,
            gen,
            transfers: 0,
        })
    }

    pub fn a(&self) -> &AnalogTile<T> {
        &self.a
    }

    pub fn a_mut(&mut self) -> &mut AnalogTile<T> {
        &mut self.a
    }

    pub fn c(&self) -> &AnalogTile<T> {
        &self.c
    }

    pub fn c_mut(&mut self) -> &mut AnalogTile<T> {
        &mut self.c
    }

    pub fn config(&self) -> &TikiTakaConfig {
        &self.cfg
    }

    pub fn transfers(&self) -> u64 {
        self.transfers
    }

    pub fn sample_counter(&self) -> u32 {
        self.sample_counter
    }

    pub fn transfer_index(&self) -> usize {
        self.gen.position()
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    /// `y = (gamma A + C) x`, each array read with its own periphery.
    pub fn composite_forward(&mut self, x: &[T]) -> Result<Vec<T>> {
        let mut y = self.c.forward(x)?;
        if self.cfg.gamma != 0.0 {
            let g = T::of(self.cfg.gamma);
            for (yi, ai) in y.iter_mut().zip(self.a.forward(x)?) {
                *yi += g * ai;
            }
        }
        Ok(y)
    }

    /// `z = (gamma A + C)^T d`.
    pub fn composite_backward(&mut self, d: &[T]) -> Result<Vec<T>> {
        let mut z = self.c.backward(d)?;
        if self.cfg.gamma != 0.0 {
            let g = T::of(self.cfg.gamma);
            for (zi, ai) in z.iter_mut().zip(self.a.backward(d)?) {
                *zi += g * ai;
            }
        }
        Ok(z)
    }

    /// Gradient-descent update of `A` only.
    pub fn update_a(&mut self, x: &[T], d: &[T], eta: T) -> Result<()> {
        self.a.update(x, d, eta)
    }

    /// Count one finished sample; on every `ns`-th, read the next probe
    /// column of `A` and add `lambda * f(v) u^T` to `C`.
    pub fn maybe_transfer(&mut self) -> Result<bool> {
        self.sample_counter += 1;
        if self.sample_counter < self.cfg.ns {
            return Ok(false);
        }
        self.sample_counter = 0;
        let u: Vec<T> = self.gen.next_vector();
        let noise = self
            .cfg
            .transfer_read_noise_std
            .unwrap_or(self.a.periphery().mvm_noise_std);
        let v = self.a.forward_with_noise(&u, T::of(noise))?;
        let tv = T::of(self.cfg.threshold_tv);
        let neg_fv: Vec<T> = v.iter().map(|&vi| -threshold_filter(vi, tv)).collect();
        if self.cfg.lambda_c > 0.0 {
            self.c.update(&u, &neg_fv, T::of(self.cfg.lambda_c))?;
        }
        self.transfers += 1;
        Ok(true)
    }

    /// `gamma A + C` as stored.
    pub fn effective_weights(&self) -> Matrix<T> {
        let g = T::of(self.cfg.gamma);
        let a = self.a.read_weights();
        let mut w = self.c.read_weights();
        for (wi, ai) in w.as_mut_slice().iter_mut().zip(a.as_slice()) {
            *wi += g * *ai;
        }
        w
    }
}
