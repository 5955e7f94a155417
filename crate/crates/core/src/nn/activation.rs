use serde::{Deserialize, Serialize};

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    /// Only valid on the output layer, paired with cross-entropy.
    Softmax,
}

impl Activation {
    pub fn apply<T: Scalar>(self, z: &[T]) -> Vec<T> {
        match self {
            Activation::Identity => z.to_vec(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Elementwise derivative expressed through the activation output.
    /// Softmax has no elementwise derivative; its delta comes from the loss.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Tanh => T::one() - a * a,
            Activation::Softmax => panic!("softmax derivative is taken through the cross-entropy loss"),
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let m = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-ln p[label]`, floored to stay finite.
pub fn cross_entropy<T: Scalar>(p: &[T], label: usize) -> T {
    -p[label].max(T::of(1e-300_f64.max(T::min_positive_value().as_f64()))).ln()
}

/// Gradient of softmax + cross-entropy w.r.t. the logits: `p - onehot(label)`.
pub fn softmax_ce_delta<T: Scalar>(p: &[T], label: usize) -> Vec<T> {
    let mut d = p.to_vec();
    d[label] -= T::one();
    d
}

pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
