//! Network topologies. Every layer maps onto one weight matrix whose last
//! column multiplies an always-one input (the bias).

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::im2col::ConvGeometry;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    FullyConnected {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    /// Valid, stride-1 convolution over a `channels x height x width` input,
    /// followed by non-overlapping max pooling (`pool = 1` disables it).
    ConvAsMatrix {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        pool: usize,
        activation: Activation,
    },
    /// Gates stacked as `[i; f; o; g]` over columns `[input, h_prev, 1]`.
    LstmBlock { inputs: usize, hidden: usize },
}

impl LayerSpec {
    /// `(rows, cols)` of the mapped weight matrix, bias column included.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::FullyConnected { inputs, outputs, .. } => (outputs, inputs + 1),
            LayerSpec::ConvAsMatrix {
                kernel,
                in_channels,
                out_channels,
                ..
            } => (out_channels, kernel * kernel * in_channels + 1),
            LayerSpec::LstmBlock { inputs, hidden } => (4 * hidden, inputs + hidden + 1),
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::FullyConnected { inputs, .. } => inputs,
            LayerSpec::ConvAsMatrix {
                in_channels,
                height,
                width,
                ..
            } => in_channels * height * width,
            LayerSpec::LstmBlock { inputs, .. } => inputs,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::FullyConnected { outputs, .. } => outputs,
            LayerSpec::ConvAsMatrix {
                out_channels, pool, ..
            } => {
                let g = self.conv_geometry().expect("conv layer");
                out_channels * (g.out_height() / pool) * (g.out_width() / pool)
            }
            LayerSpec::LstmBlock { hidden, .. } => hidden,
        }
    }

    pub fn conv_geometry(&self) -> Option<ConvGeometry> {
        match *self {
            LayerSpec::ConvAsMatrix {
                kernel,
                in_channels,
                height,
                width,
                ..
            } => Some(ConvGeometry {
                channels: in_channels,
                height,
                width,
                kernel,
            }),
            _ => None,
        }
    }

    /// MVM/update repetitions per sample. Recurrent blocks repeat once per
    /// unrolled step, which is only known at run time; this returns 1 for them.
    pub fn weight_sharing(&self) -> usize {
        self.conv_geometry().map_or(1, |g| g.positions())
    }

    pub fn activation(&self) -> Option<Activation> {
        match *self {
            LayerSpec::FullyConnected { activation, .. } | LayerSpec::ConvAsMatrix { activation, .. } => {
                Some(activation)
            }
            LayerSpec::LstmBlock { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    CrossEntropySoftmax,
    /// `0.5 * |a - y|^2` on the output activation.
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    Feedforward,
    /// Recurrent blocks first, then per-step fully connected read-out.
    Recurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub loss: Loss,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, loss: Loss) -> Result<Self> {
        let s = Self { layers, loss };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(format!("network: {m}")));
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if let Some(g) = l.conv_geometry() {
                let LayerSpec::ConvAsMatrix { pool, out_channels, .. } = *l else {
                    unreachable!()
                };
                if g.kernel == 0 || g.kernel > g.height || g.kernel > g.width || out_channels == 0 {
                    return bad(format!("layer {i}: kernel does not fit the input"));
                }
                if pool == 0 || g.out_height() % pool != 0 || g.out_width() % pool != 0 {
                    return bad(format!("layer {i}: pool {pool} does not tile the conv output"));
                }
            }
            if l.input_len() == 0 || l.output_len() == 0 {
                return bad(format!("layer {i}: zero-sized"));
            }
            if i > 0 && self.layers[i - 1].output_len() != l.input_len() {
                return bad(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.input_len(),
                    i - 1,
                    self.layers[i - 1].output_len()
                ));
            }
        }
        let last = self.layers.last().unwrap();
        match (self.loss, last) {
            (Loss::CrossEntropySoftmax, LayerSpec::FullyConnected { activation, .. })
                if *activation == Activation::Softmax => {}
            (Loss::CrossEntropySoftmax, _) => return bad("cross-entropy needs a softmax output layer".into()),
            (Loss::SquaredError, LayerSpec::FullyConnected { activation, .. })
                if *activation != Activation::Softmax => {}
            (Loss::SquaredError, _) => return bad("squared error needs a non-softmax dense output".into()),
        }
        for (i, l) in self.layers[..self.layers.len() - 1].iter().enumerate() {
            if l.activation() == Some(Activation::Softmax) {
                return bad(format!("layer {i}: softmax is only allowed on the output"));
            }
        }
        let first_dense = self.layers.iter().position(|l| !matches!(l, LayerSpec::LstmBlock { .. }));
        let has_lstm = matches!(self.layers[0], LayerSpec::LstmBlock { .. });
        if has_lstm {
            let fd = first_dense.unwrap_or(self.layers.len());
            if self.layers[fd..]
                .iter()
                .any(|l| !matches!(l, LayerSpec::FullyConnected { .. }))
            {
                return bad("recurrent nets take LSTM blocks followed by fully connected layers only".into());
            }
        } else if self.layers.iter().any(|l| matches!(l, LayerSpec::LstmBlock { .. })) {
            return bad("LSTM blocks must come first".into());
        }
        Ok(())
    }

    pub fn kind(&self) -> NetworkKind {
        if matches!(self.layers[0], LayerSpec::LstmBlock { .. }) {
            NetworkKind::Recurrent
        } else {
            NetworkKind::Feedforward
        }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().output_len()
    }

    pub fn matrix_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(LayerSpec::matrix_shape).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.matrix_shapes().iter().map(|(r, c)| r * c).sum()
    }

    /// Sigmoid fully connected stack on 28x28 inputs with a 10-way softmax.
    /// `hidden = [256, 128]` gives the reference topology.
    pub fn fcn_mnist(hidden: &[usize]) -> Result<Self> {
        Self::mlp(784, hidden, 10, Activation::Sigmoid)
    }

    /// Two 5x5 conv stages (16 and 32 kernels) with 2x2 max pooling, then a
    /// 128-unit tanh layer and a 10-way softmax.
    pub fn cnn_mnist() -> Result<Self> {
        Self::new(
            vec![
                LayerSpec::ConvAsMatrix {
                    kernel: 5,
                    in_channels: 1,
                    out_channels: 16,
                    height: 28,
                    width: 28,
                    pool: 2,
                    activation: Activation::Tanh,
                },
                LayerSpec::ConvAsMatrix {
                    kernel: 5,
                    in_channels: 16,
                    out_channels: 32,
                    height: 12,
                    width: 12,
                    pool: 2,
                    activation: Activation::Tanh,
                },
                LayerSpec::FullyConnected {
                    inputs: 512,
                    outputs: 128,
                    activation: Activation::Tanh,
                },
                LayerSpec::FullyConnected {
                    inputs: 128,
                    outputs: 10,
                    activation: Activation::Softmax,
                },
            ],
            Loss::CrossEntropySoftmax,
        )
    }

    /// Stacked LSTM blocks over one-hot characters with a per-step softmax
    /// read-out. `lstm_wp(87, 64, 2)` is the reference topology.
    pub fn lstm_wp(vocab: usize, hidden: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(SimError::InvalidConfig("network: LSTM needs at least one block".into()));
        }
        let mut layers = Vec::with_capacity(blocks + 1);
        for b in 0..blocks {
            layers.push(LayerSpec::LstmBlock {
                inputs: if b == 0 { vocab } else { hidden },
                hidden,
            });
        }
        layers.push(LayerSpec::FullyConnected {
            inputs: hidden,
            outputs: vocab,
            activation: Activation::Softmax,
        });
        Self::new(layers, Loss::CrossEntropySoftmax)
    }

    /// Small two-layer classifier used by fast tests.
    pub fn toy(inputs: usize, hidden: usize, classes: usize) -> Result<Self> {
        Self::mlp(inputs, &[hidden], classes, Activation::Sigmoid)
    }

    pub fn mlp(inputs: usize, hidden: &[usize], classes: usize, act: Activation) -> Result<Self> {
        let mut layers = Vec::new();
        let mut prev = inputs;
        for &h in hidden {
            layers.push(LayerSpec::FullyConnected {
                inputs: prev,
                outputs: h,
                activation: act,
            });
            prev = h;
        }
        layers.push(LayerSpec::FullyConnected {
            inputs: prev,
            outputs: classes,
            activation: Activation::Softmax,
        });
        Self::new(layers, Loss::CrossEntropySoftmax)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matrix_shapes() {
        assert_eq!(
            NetworkSpec::fcn_mnist(&[256, 128]).unwrap().matrix_shapes(),
            vec![(256, 785), (128, 257), (10, 129)]
        );
        let cnn = NetworkSpec::cnn_mnist().unwrap();
        assert_eq!(cnn.matrix_shapes(), vec![(16, 26), (32, 401), (128, 513), (10, 129)]);
        assert_eq!(
            cnn.layers.iter().map(LayerSpec::weight_sharing).collect::<Vec<_>>(),
            vec![576, 64, 1, 1]
        );
        assert_eq!(
            NetworkSpec::lstm_wp(87, 64, 2).unwrap().matrix_shapes(),
            vec![(256, 152), (256, 129), (87, 65)]
        );
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let r = NetworkSpec::new(
            vec![
                LayerSpec::FullyConnected {
                    inputs: 4,
                    outputs: 5,
                    activation: Activation::Sigmoid,
                },
                LayerSpec::FullyConnected {
                    inputs: 6,
                    outputs: 3,
                    activation: Activation::Softmax,
                },
            ],
            Loss::CrossEntropySoftmax,
        );
        assert!(r.is_err());
    }

    #[test]
    fn loss_and_output_must_agree() {
        let dense = |a| LayerSpec::FullyConnected {
            inputs: 2,
            outputs: 2,
            activation: a,
        };
        assert!(NetworkSpec::new(vec![dense(Activation::Sigmoid)], Loss::CrossEntropySoftmax).is_err());
        assert!(NetworkSpec::new(vec![dense(Activation::Softmax)], Loss::SquaredError).is_err());
        assert!(NetworkSpec::new(vec![dense(Activation::Identity)], Loss::SquaredError).is_ok());
    }

    #[test]
    fn lstm_must_lead() {
        let r = NetworkSpec::new(
            vec![
                LayerSpec::FullyConnected {
                    inputs: 3,
                    outputs: 3,
                    activation: Activation::Tanh,
                },
                LayerSpec::LstmBlock { inputs: 3, hidden: 3 },
                LayerSpec::FullyConnected {
                    inputs: 3,
                    outputs: 3,
                    activation: Activation::Softmax,
                },
            ],
            Loss::CrossEntropySoftmax,
        );
        assert!(r.is_err());
    }
}
