//! Network state and the forward/backward pass shared by every trainer.
//!
//! Weight matrices sit behind a [`WeightBackend`]; activations, pooling,
//! losses and deltas are always computed digitally between them. A pass
//! returns the loss together with the outer-product pairs `(x, delta)` each
//! layer would apply, one per weight-sharing repetition, so the same pass
//! drives an exact float step or a sequence of analog array updates.

use super::activation::{argmax, cross_entropy, softmax_ce_delta, Activation};
use super::im2col::{col2im, im2col_columns, max_pool, max_pool_backward};
use super::spec::{LayerSpec, Loss, NetworkKind, NetworkSpec};
use crate::error::{check_len, Result, SimError};
use crate::matrix::Matrix;
use crate::tiki_taka::TikiTakaLayer;
use crate::tile::AnalogTile;
use crate::Scalar;

/// Where a layer's weights live.
#[derive(Debug, Clone)]
pub enum WeightBackend<T> {
    /// Exact floating point.
    Digital(Matrix<T>),
    Analog(AnalogTile<T>),
    TikiTaka(TikiTakaLayer<T>),
}

impl<T: Scalar> WeightBackend<T> {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            WeightBackend::Digital(m) => (m.rows(), m.cols()),
            WeightBackend::Analog(t) => (t.rows(), t.cols()),
            WeightBackend::TikiTaka(l) => (l.rows(), l.cols()),
        }
    }

    pub fn forward(&mut self, x: &[T]) -> Result<Vec<T>> {
        match self {
            WeightBackend::Digital(m) => {
                check_len("forward input", m.cols(), x.len())?;
                Ok(m.matvec(x))
            }
            WeightBackend::Analog(t) => t.forward(x),
            WeightBackend::TikiTaka(l) => l.composite_forward(x),
        }
    }

    pub fn backward(&mut self, d: &[T]) -> Result<Vec<T>> {
        match self {
            WeightBackend::Digital(m) => {
                check_len("backward input", m.rows(), d.len())?;
                Ok(m.matvec_t(d))
            }
            WeightBackend::Analog(t) => t.backward(d),
            WeightBackend::TikiTaka(l) => l.composite_backward(d),
        }
    }

    /// `W <- W - eta d x^T` (on `A` for Tiki-Taka).
    pub fn update(&mut self, x: &[T], d: &[T], eta: T) -> Result<()> {
        match self {
            WeightBackend::Digital(m) => {
                check_len("update x", m.cols(), x.len())?;
                check_len("update d", m.rows(), d.len())?;
                m.add_outer(-eta, d, x);
                Ok(())
            }
            WeightBackend::Analog(t) => t.update(x, d, eta),
            WeightBackend::TikiTaka(l) => l.update_a(x, d, eta),
        }
    }

    /// Per-sample boundary; returns whether a transfer fired.
    pub fn end_sample(&mut self) -> Result<bool> {
        match self {
            WeightBackend::TikiTaka(l) => l.maybe_transfer(),
            _ => Ok(false),
        }
    }

    pub fn effective_weights(&self) -> Matrix<T> {
        match self {
            WeightBackend::Digital(m) => m.clone(),
            WeightBackend::Analog(t) => t.read_weights(),
            WeightBackend::TikiTaka(l) => l.effective_weights(),
        }
    }

    pub fn prob_clamps(&self) -> u64 {
        match self {
            WeightBackend::Digital(_) => 0,
            WeightBackend::Analog(t) => t.stats().prob_clamps,
            WeightBackend::TikiTaka(l) => l.a().stats().prob_clamps + l.c().stats().prob_clamps,
        }
    }

    /// Tiki-Taka layers whose `A` array has not been symmetry-calibrated.
    pub fn is_uncalibrated_tiki_taka(&self) -> bool {
        matches!(self, WeightBackend::TikiTaka(l) if !l.a().is_calibrated())
    }
}

/// Array cycles spent by one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CycleCounters {
    pub forward: u64,
    pub backward: u64,
    pub update: u64,
    pub transfer_read: u64,
    pub transfer_update: u64,
    pub samples: u64,
}

impl CycleCounters {
    pub fn sgd_cycles(&self) -> u64 {
        self.forward + self.backward + self.update
    }

    pub fn total(&self) -> u64 {
        self.sgd_cycles() + self.transfer_read + self.transfer_update
    }
}

#[derive(Debug, Clone)]
pub struct Layer<T> {
    spec: LayerSpec,
    weights: WeightBackend<T>,
    cycles: CycleCounters,
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, weights: WeightBackend<T>) -> Result<Self> {
        check_len("layer matrix rows", spec.matrix_shape().0, weights.shape().0)?;
        check_len("layer matrix cols", spec.matrix_shape().1, weights.shape().1)?;
        Ok(Self {
            spec,
            weights,
            cycles: CycleCounters::default(),
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightBackend<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightBackend<T> {
        &mut self.weights
    }

    pub fn cycles(&self) -> CycleCounters {
        self.cycles
    }

    fn fwd(&mut self, x: &[T], count: bool) -> Result<Vec<T>> {
        self.cycles.forward += u64::from(count);
        self.weights.forward(x)
    }

    fn bwd(&mut self, d: &[T]) -> Result<Vec<T>> {
        self.cycles.backward += 1;
        self.weights.backward(d)
    }
}

/// What a sample asks the output to match.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a, T> {
    Class(usize),
    Values(&'a [T]),
}

#[derive(Debug, Clone, Copy)]
pub enum Sample<'a, T> {
    Vector { input: &'a [T], target: Target<'a, T> },
    /// Token ids; `targets[t]` is predicted from `inputs[..=t]`.
    Sequence { inputs: &'a [usize], targets: &'a [usize] },
}

/// Result of one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Pass<T> {
    /// Summed over the predictions made (one, or one per unrolled step).
    pub loss: T,
    pub predictions: usize,
    /// Predictions whose argmax matched a class target.
    pub correct: usize,
    /// Per layer, the `(x, delta)` pairs whose outer products form the
    /// gradient `sum delta x^T`, in application order.
    pub outer: Vec<Vec<(Vec<T>, Vec<T>)>>,
}

impl<T: Scalar> Pass<T> {
    pub fn mean_loss(&self) -> T {
        self.loss / T::of(self.predictions as f64)
    }
}

#[derive(Debug, Clone)]
enum FfCache<T> {
    Dense { x: Vec<T>, a: Vec<T> },
    Conv { cols: Vec<Vec<T>>, a: Vec<T>, argmax: Vec<usize> },
}

#[derive(Debug, Clone)]
struct LstmStep<T> {
    xin: Vec<T>,
    i: Vec<T>,
    f: Vec<T>,
    o: Vec<T>,
    g: Vec<T>,
    c_prev: Vec<T>,
    tanh_c: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
}

fn with_bias<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(T::one());
    v
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: NetworkSpec, backends: Vec<WeightBackend<T>>) -> Result<Self> {
        spec.validate()?;
        check_len("weight backends", spec.layers.len(), backends.len())?;
        let layers = spec
            .layers
            .iter()
            .cloned()
            .zip(backends)
            .map(|(s, b)| Layer::new(s, b))
            .collect::<Result<_>>()?;
        Ok(Self { spec, layers })
    }

    /// Float network with the given weights.
    pub fn digital(spec: NetworkSpec, weights: Vec<Matrix<T>>) -> Result<Self> {
        Self::new(spec, weights.into_iter().map(WeightBackend::Digital).collect())
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn effective_weights(&self) -> Vec<Matrix<T>> {
        self.layers.iter().map(|l| l.weights.effective_weights()).collect()
    }

    pub fn cycles(&self) -> Vec<CycleCounters> {
        self.layers.iter().map(|l| l.cycles).collect()
    }

    pub fn prob_clamps(&self) -> u64 {
        self.layers.iter().map(|l| l.weights.prob_clamps()).sum()
    }

    /// Forward and backward through the arrays without touching weights.
    pub fn forward_backward(&mut self, sample: Sample<'_, T>) -> Result<Pass<T>> {
        match (self.spec.kind(), sample) {
            (NetworkKind::Feedforward, Sample::Vector { input, target }) => self.ff_pass(input, target, true),
            (NetworkKind::Recurrent, Sample::Sequence { inputs, targets }) => self.rnn_pass(inputs, targets, true),
            _ => Err(SimError::InvalidConfig("sample kind does not match the network".into())),
        }
    }

    /// Forward only: loss and accuracy, no cycles counted.
    pub fn score(&mut self, sample: Sample<'_, T>) -> Result<Pass<T>> {
        match (self.spec.kind(), sample) {
            (NetworkKind::Feedforward, Sample::Vector { input, target }) => self.ff_pass(input, target, false),
            (NetworkKind::Recurrent, Sample::Sequence { inputs, targets }) => self.rnn_pass(inputs, targets, false),
            _ => Err(SimError::InvalidConfig("sample kind does not match the network".into())),
        }
    }

    /// Apply the pass's outer products (cycle 3) and close the sample
    /// (Tiki-Taka transfers). Returns the number of transfers fired.
    pub fn apply_updates(&mut self, pass: &Pass<T>, eta: T) -> Result<u64> {
        check_len("pass layers", self.layers.len(), pass.outer.len())?;
        let mut fired = 0;
        for (layer, pairs) in self.layers.iter_mut().zip(&pass.outer) {
            for (x, d) in pairs {
                layer.weights.update(x, d, eta)?;
                layer.cycles.update += 1;
            }
            layer.cycles.samples += 1;
            if layer.weights.end_sample()? {
                layer.cycles.transfer_read += 1;
                layer.cycles.transfer_update += 1;
                fired += 1;
            }
        }
        Ok(fired)
    }

    /// `sum delta x^T` per layer.
    pub fn gradients(&self, pass: &Pass<T>) -> Vec<Matrix<T>> {
        self.spec
            .layers
            .iter()
            .zip(&pass.outer)
            .map(|(s, pairs)| {
                let (r, c) = s.matrix_shape();
                let mut g = Matrix::zeros(r, c);
                for (x, d) in pairs {
                    g.add_outer(T::one(), d, x);
                }
                g
            })
            .collect()
    }

    fn output_delta(&self, a: &[T], target: Target<'_, T>) -> Result<(T, Vec<T>, bool)> {
        let n = a.len();
        match (self.spec.loss, target) {
            (Loss::CrossEntropySoftmax, Target::Class(k)) => {
                if k >= n {
                    return Err(SimError::DimensionMismatch {
                        context: "class label".into(),
                        expected: n,
                        got: k,
                    });
                }
                Ok((cross_entropy(a, k), softmax_ce_delta(a, k), argmax(a) == k))
            }
            (Loss::CrossEntropySoftmax, Target::Values(_)) => Err(SimError::InvalidConfig(
                "cross-entropy needs a class target".into(),
            )),
            (Loss::SquaredError, t) => {
                let y: Vec<T> = match t {
                    Target::Class(k) => (0..n).map(|i| if i == k { T::one() } else { T::zero() }).collect(),
                    Target::Values(v) => {
                        check_len("regression target", n, v.len())?;
                        v.to_vec()
                    }
                };
                let act = self.spec.layers.last().unwrap().activation().unwrap();
                let mut loss = T::zero();
                let d = a
                    .iter()
                    .zip(&y)
                    .map(|(&ai, &yi)| {
                        loss += T::of(0.5) * (ai - yi) * (ai - yi);
                        (ai - yi) * act.derivative_from_output(ai)
                    })
                    .collect();
                let hit = matches!(t, Target::Class(k) if argmax(a) == k);
                Ok((loss, d, hit))
            }
        }
    }

    fn ff_pass(&mut self, input: &[T], target: Target<'_, T>, train: bool) -> Result<Pass<T>> {
        check_len("network input", self.spec.input_len(), input.len())?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = input.to_vec();
        for layer in &mut self.layers {
            match layer.spec.clone() {
                LayerSpec::FullyConnected { activation, .. } => {
                    let x = with_bias(&act);
                    let z = layer.fwd(&x, train)?;
                    let a = activation.apply(&z);
                    act = a.clone();
                    caches.push(FfCache::Dense { x, a });
                }
                spec @ LayerSpec::ConvAsMatrix {
                    out_channels,
                    pool,
                    activation,
                    ..
                } => {
                    let g = spec.conv_geometry().unwrap();
                    let cols = im2col_columns(&act, &g)?;
                    let p = cols.len();
                    let mut a = vec![T::zero(); out_channels * p];
                    for (pi, col) in cols.iter().enumerate() {
                        let y = activation.apply(&layer.fwd(col, train)?);
                        for (c, v) in y.into_iter().enumerate() {
                            a[c * p + pi] = v;
                        }
                    }
                    let (pooled, arg) = max_pool(&a, out_channels, g.out_height(), g.out_width(), pool);
                    act = pooled;
                    caches.push(FfCache::Conv { cols, a, argmax: arg });
                }
                LayerSpec::LstmBlock { .. } => unreachable!("validated feedforward"),
            }
        }
        let (loss, mut delta, hit) = self.output_delta(&act, target)?;
        let mut outer: Vec<Vec<(Vec<T>, Vec<T>)>> = vec![Vec::new(); self.layers.len()];
        if !train {
            return Ok(Pass {
                loss,
                predictions: 1,
                correct: usize::from(hit),
                outer,
            });
        }
        let last = self.layers.len() - 1;
        // `delta` is w.r.t. the output pre-activation; `grad` w.r.t. a layer's
        // (pooled) output.
        let mut grad: Vec<T> = Vec::new();
        for (l, cache) in caches.into_iter().enumerate().rev() {
            let layer = &mut self.layers[l];
            match cache {
                FfCache::Dense { x, a } => {
                    if l != last {
                        let act = layer.spec.activation().unwrap();
                        delta = grad.iter().zip(&a).map(|(&g, &ai)| g * act.derivative_from_output(ai)).collect();
                    }
                    let mut g = layer.bwd(&delta)?;
                    g.pop();
                    outer[l].push((x, std::mem::take(&mut delta)));
                    grad = g;
                }
                FfCache::Conv { cols, a, argmax } => {
                    let act = layer.spec.activation().unwrap();
                    let g_geom = layer.spec.conv_geometry().unwrap();
                    let grad_a = max_pool_backward(&grad, &argmax, a.len());
                    let p = cols.len();
                    let ch = a.len() / p;
                    let mut gcols = Vec::with_capacity(p);
                    for (pi, col) in cols.into_iter().enumerate() {
                        let d: Vec<T> = (0..ch)
                            .map(|c| grad_a[c * p + pi] * act.derivative_from_output(a[c * p + pi]))
                            .collect();
                        let mut gc = layer.bwd(&d)?;
                        gc.pop();
                        gcols.push(gc);
                        outer[l].push((col, d));
                    }
                    grad = col2im(&gcols, &g_geom);
                }
            }
        }
        Ok(Pass {
            loss,
            predictions: 1,
            correct: usize::from(hit),
            outer,
        })
    }

    fn rnn_pass(&mut self, inputs: &[usize], targets: &[usize], train: bool) -> Result<Pass<T>> {
        check_len("sequence targets", inputs.len(), targets.len())?;
        if inputs.is_empty() {
            return Err(SimError::EmptyDataset("empty sequence".into()));
        }
        let steps = inputs.len();
        let vocab = self.spec.input_len();
        let n_lstm = self
            .layers
            .iter()
            .take_while(|l| matches!(l.spec, LayerSpec::LstmBlock { .. }))
            .count();

        // Forward through the recurrent blocks, one time step at a time.
        let mut seq: Vec<Vec<T>> = Vec::with_capacity(steps);
        for &tok in inputs {
            if tok >= vocab {
                return Err(SimError::DimensionMismatch {
                    context: "token id".into(),
                    expected: vocab,
                    got: tok,
                });
            }
            let mut v = vec![T::zero(); vocab];
            v[tok] = T::one();
            seq.push(v);
        }
        let mut lstm_caches: Vec<Vec<LstmStep<T>>> = Vec::with_capacity(n_lstm);
        for layer in &mut self.layers[..n_lstm] {
            let LayerSpec::LstmBlock { hidden: h, .. } = layer.spec else {
                unreachable!()
            };
            let mut hs = vec![T::zero(); h];
            let mut cs = vec![T::zero(); h];
            let mut steps_cache = Vec::with_capacity(steps);
            let mut out = Vec::with_capacity(steps);
            for x in &seq {
                let mut xin = Vec::with_capacity(x.len() + h + 1);
                xin.extend_from_slice(x);
                xin.extend_from_slice(&hs);
                xin.push(T::one());
                let z = layer.fwd(&xin, train)?;
                let i = Activation::Sigmoid.apply(&z[..h]);
                let f = Activation::Sigmoid.apply(&z[h..2 * h]);
                let o = Activation::Sigmoid.apply(&z[2 * h..3 * h]);
                let g = Activation::Tanh.apply(&z[3 * h..]);
                let c_prev = cs.clone();
                for k in 0..h {
                    cs[k] = f[k] * c_prev[k] + i[k] * g[k];
                }
                let tanh_c: Vec<T> = cs.iter().map(|c| c.tanh()).collect();
                for k in 0..h {
                    hs[k] = o[k] * tanh_c[k];
                }
                out.push(hs.clone());
                steps_cache.push(LstmStep {
                    xin,
                    i,
                    f,
                    o,
                    g,
                    c_prev,
                    tanh_c,
                });
            }
            lstm_caches.push(steps_cache);
            seq = out;
        }

        // Per-step read-out through the fully connected layers.
        let mut loss = T::zero();
        let mut correct = 0;
        let mut outer: Vec<Vec<(Vec<T>, Vec<T>)>> = vec![Vec::new(); self.layers.len()];
        let mut dense_caches: Vec<Vec<(Vec<T>, Vec<T>)>> = Vec::with_capacity(steps);
        for (t, h_top) in seq.iter().enumerate() {
            let mut act = h_top.clone();
            let mut caches = Vec::new();
            for layer in &mut self.layers[n_lstm..] {
                let x = with_bias(&act);
                let z = layer.fwd(&x, train)?;
                act = layer.spec.activation().unwrap().apply(&z);
                caches.push((x, act.clone()));
            }
            let (l_t, delta, hit) = self.output_delta(&act, Target::Class(targets[t]))?;
            loss += l_t;
            correct += usize::from(hit);
            dense_caches.push(caches);
            if train {
                // Stash the output delta in place of the unused activation.
                dense_caches[t].last_mut().unwrap().1 = delta;
            }
        }
        if !train {
            return Ok(Pass {
                loss,
                predictions: steps,
                correct,
                outer,
            });
        }

        // Backward through the read-out at every step.
        let n_layers = self.layers.len();
        let mut dh_top: Vec<Vec<T>> = Vec::with_capacity(steps);
        for caches in dense_caches {
            let mut delta = Vec::new();
            let mut grad: Vec<T> = Vec::new();
            for (j, (x, a)) in caches.into_iter().enumerate().rev() {
                let l = n_lstm + j;
                let layer = &mut self.layers[l];
                if l == n_layers - 1 {
                    delta = a;
                } else {
                    let act = layer.spec.activation().unwrap();
                    delta = grad.iter().zip(&a).map(|(&g, &ai)| g * act.derivative_from_output(ai)).collect();
                }
                let mut g = layer.bwd(&delta)?;
                g.pop();
                outer[l].push((x, std::mem::take(&mut delta)));
                grad = g;
            }
            let _ = delta;
            dh_top.push(grad);
        }

        // Backpropagation through time, top block first.
        let mut dh_above = dh_top;
        for l in (0..n_lstm).rev() {
            let layer = &mut self.layers[l];
            let LayerSpec::LstmBlock { inputs: n_in, hidden: h } = layer.spec else {
                unreachable!()
            };
            let cache = &lstm_caches[l];
            let mut dh_next = vec![T::zero(); h];
            let mut dc_next = vec![T::zero(); h];
            let mut dh_below = vec![Vec::new(); steps];
            let mut pairs = Vec::with_capacity(steps);
            for t in (0..steps).rev() {
                let s = &cache[t];
                let mut dz = vec![T::zero(); 4 * h];
                for k in 0..h {
                    let dh = dh_above[t][k] + dh_next[k];
                    let d_o = dh * s.tanh_c[k];
                    let dc = dh * s.o[k] * (T::one() - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
                    let d_i = dc * s.g[k];
                    let d_g = dc * s.i[k];
                    let d_f = dc * s.c_prev[k];
                    dc_next[k] = dc * s.f[k];
                    dz[k] = d_i * s.i[k] * (T::one() - s.i[k]);
                    dz[h + k] = d_f * s.f[k] * (T::one() - s.f[k]);
                    dz[2 * h + k] = d_o * s.o[k] * (T::one() - s.o[k]);
                    dz[3 * h + k] = d_g * (T::one() - s.g[k] * s.g[k]);
                }
                let gx = layer.bwd(&dz)?;
                dh_next.copy_from_slice(&gx[n_in..n_in + h]);
                dh_below[t] = gx[..n_in].to_vec();
                pairs.push((s.xin.clone(), dz));
            }
            pairs.reverse();
            outer[l] = pairs;
            dh_above = dh_below;
        }
        Ok(Pass {
            loss,
            predictions: steps,
            correct,
            outer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn random_weights(spec: &NetworkSpec, seed: u64, scale: f64) -> Vec<Matrix<f64>> {
        let mut rng = substream(seed, &[0]);
        spec.matrix_shapes()
            .into_iter()
            .map(|(r, c)| Matrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale)))
            .collect()
    }

    /// Central differences of the summed loss w.r.t. every weight.
    fn check_gradients(spec: NetworkSpec, sample: Sample<'_, f64>, seed: u64) -> f64 {
        let weights = random_weights(&spec, seed, 0.5);
        let mut net = Network::digital(spec.clone(), weights.clone()).unwrap();
        let pass = net.forward_backward(sample).unwrap();
        let grads = net.gradients(&pass);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for l in 0..weights.len() {
            for k in 0..weights[l].as_slice().len() {
                let eval = |delta: f64| {
                    let mut w = weights.clone();
                    w[l].as_mut_slice()[k] += delta;
                    Network::digital(spec.clone(), w).unwrap().score(sample).unwrap().loss
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads[l].as_slice()[k];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
                worst = worst.max(if (fd - an).abs() < 1e-9 { 0.0 } else { err });
            }
        }
        worst
    }

    #[test]
    fn linear_squared_error_gradient_matches_hand_formula() {
        let spec = NetworkSpec::new(
            vec![LayerSpec::FullyConnected {
                inputs: 1,
                outputs: 1,
                activation: Activation::Identity,
            }],
            Loss::SquaredError,
        )
        .unwrap();
        let (w, b, x, y) = (0.7_f64, -0.2, 1.5, 0.4);
        let mut net = Network::digital(spec, vec![Matrix::from_vec(1, 2, vec![w, b])]).unwrap();
        let pass = net
            .forward_backward(Sample::Vector {
                input: &[x],
                target: Target::Values(&[y]),
            })
            .unwrap();
        let g = net.gradients(&pass);
        let r = w * x + b - y;
        assert!((pass.loss - 0.5 * r * r).abs() < 1e-15);
        assert!((g[0].get(0, 0) - r * x).abs() < 1e-15);
        assert!((g[0].get(0, 1) - r).abs() < 1e-15);
    }

    #[test]
    fn fcn_gradient_check() {
        let spec = NetworkSpec::mlp(6, &[5, 4], 3, Activation::Sigmoid).unwrap();
        let input = [0.1, -0.4, 0.9, 0.3, 0.0, -0.7];
        let worst = check_gradients(
            spec,
            Sample::Vector {
                input: &input,
                target: Target::Class(2),
            },
            5,
        );
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn conv_gradient_check() {
        let spec = NetworkSpec::new(
            vec![
                LayerSpec::ConvAsMatrix {
                    kernel: 3,
                    in_channels: 2,
                    out_channels: 3,
                    height: 6,
                    width: 6,
                    pool: 2,
                    activation: Activation::Tanh,
                },
                LayerSpec::FullyConnected {
                    inputs: 12,
                    outputs: 4,
                    activation: Activation::Softmax,
                },
            ],
            Loss::CrossEntropySoftmax,
        )
        .unwrap();
        let input: Vec<f64> = (0..72).map(|v| ((v * 37 % 17) as f64 / 17.0) - 0.5).collect();
        let worst = check_gradients(
            spec,
            Sample::Vector {
                input: &input,
                target: Target::Class(1),
            },
            9,
        );
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn lstm_gradient_check() {
        let spec = NetworkSpec::lstm_wp(5, 4, 2).unwrap();
        let worst = check_gradients(
            spec,
            Sample::Sequence {
                inputs: &[0, 3, 1, 4, 2],
                targets: &[3, 1, 4, 2, 0],
            },
            13,
        );
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn conv_layer_emits_one_pair_per_position() {
        let spec = NetworkSpec::new(
            vec![
                LayerSpec::ConvAsMatrix {
                    kernel: 5,
                    in_channels: 1,
                    out_channels: 2,
                    height: 28,
                    width: 28,
                    pool: 2,
                    activation: Activation::Tanh,
                },
                LayerSpec::FullyConnected {
                    inputs: 288,
                    outputs: 10,
                    activation: Activation::Softmax,
                },
            ],
            Loss::CrossEntropySoftmax,
        )
        .unwrap();
        let w = random_weights(&spec, 1, 0.1);
        let mut net = Network::digital(spec, w).unwrap();
        let img = vec![0.5; 784];
        let pass = net
            .forward_backward(Sample::Vector {
                input: &img,
                target: Target::Class(3),
            })
            .unwrap();
        assert_eq!(pass.outer[0].len(), 576);
        assert_eq!(pass.outer[1].len(), 1);
        let c = net.cycles();
        assert_eq!((c[0].forward, c[0].backward), (576, 576));
    }

    #[test]
    fn sample_kind_must_match() {
        let spec = NetworkSpec::toy(2, 2, 2).unwrap();
        let w = random_weights(&spec, 1, 0.1);
        let mut net = Network::digital(spec, w).unwrap();
        assert!(net
            .forward_backward(Sample::Sequence {
                inputs: &[0],
                targets: &[1]
            })
            .is_err());
        assert!(net
            .forward_backward(Sample::Vector {
                input: &[0.0; 3],
                target: Target::Class(0)
            })
            .is_err());
    }
}
