//! Sliding-window unrolling that turns a valid, stride-1 convolution into a
//! sequence of matrix-vector products, plus non-overlapping max pooling.

use crate::error::{check_len, Result};
use crate::matrix::Matrix;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        self.height + 1 - self.kernel
    }

    pub fn out_width(&self) -> usize {
        self.width + 1 - self.kernel
    }

    /// Output positions; also the weight-sharing factor of the layer.
    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    /// Length of one unrolled patch, excluding the bias entry.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// One column per output position: the `(channel, ky, kx)`-ordered patch
/// followed by a constant 1 for the bias.
pub fn im2col_columns<T: Scalar>(input: &[T], g: &ConvGeometry) -> Result<Vec<Vec<T>>> {
    check_len("im2col input", g.input_len(), input.len())?;
    let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
    let mut cols = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut col = Vec::with_capacity(g.patch_len() + 1);
            for c in 0..g.channels {
                let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
                for ky in 0..k {
                    let row = &plane[(oy + ky) * g.width + ox..(oy + ky) * g.width + ox + k];
                    col.extend_from_slice(row);
                }
            }
            col.push(T::one());
            cols.push(col);
        }
    }
    Ok(cols)
}

/// The unrolled input as a `(patch_len + 1) x positions` matrix, so the
/// convolution reads `Y = W X`.
pub fn im2col_map<T: Scalar>(input: &[T], g: &ConvGeometry) -> Result<Matrix<T>> {
    let cols = im2col_columns(input, g)?;
    let rows = g.patch_len() + 1;
    Ok(Matrix::from_fn(rows, cols.len(), |r, c| cols[c][r]))
}

/// Scatter-add patch gradients (bias entries ignored) back onto the input.
pub fn col2im<T: Scalar>(grads: &[Vec<T>], g: &ConvGeometry) -> Vec<T> {
    let (ow, k) = (g.out_width(), g.kernel);
    let mut out = vec![T::zero(); g.input_len()];
    for (p, col) in grads.iter().enumerate() {
        let (oy, ox) = (p / ow, p % ow);
        let mut idx = 0;
        for c in 0..g.channels {
            let base = c * g.height * g.width;
            for ky in 0..k {
                for kx in 0..k {
                    out[base + (oy + ky) * g.width + ox + kx] += col[idx];
                    idx += 1;
                }
            }
        }
    }
    out
}

/// Max pooling over non-overlapping `pool x pool` windows of a
/// `channels x height x width` tensor. Returns the pooled tensor and, per
/// output element, the flat index of the winning input.
pub fn max_pool<T: Scalar>(
    input: &[T],
    channels: usize,
    height: usize,
    width: usize,
    pool: usize,
) -> (Vec<T>, Vec<usize>) {
    let (ph, pw) = (height / pool, width / pool);
    let mut out = Vec::with_capacity(channels * ph * pw);
    let mut arg = Vec::with_capacity(channels * ph * pw);
    for c in 0..channels {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = usize::MAX;
                for dy in 0..pool {
                    for dx in 0..pool {
                        let i = c * height * width + (py * pool + dy) * width + px * pool + dx;
                        if best == usize::MAX || input[i] > input[best] {
                            best = i;
                        }
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub fn max_pool_backward<T: Scalar>(grad: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); input_len];
    for (&g, &i) in grad.iter().zip(argmax) {
        out[i] += g;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_the_flattened_input() {
        let g = ConvGeometry {
            channels: 2,
            height: 3,
            width: 3,
            kernel: 1,
        };
        let input: Vec<f64> = (0..18).map(|v| v as f64).collect();
        let x = im2col_map(&input, &g).unwrap();
        assert_eq!((x.rows(), x.cols()), (3, 9));
        for p in 0..9 {
            assert_eq!(x.get(0, p), input[p]);
            assert_eq!(x.get(1, p), input[9 + p]);
            assert_eq!(x.get(2, p), 1.0);
        }
    }

    #[test]
    fn mnist_weight_sharing_factors() {
        let g1 = ConvGeometry {
            channels: 1,
            height: 28,
            width: 28,
            kernel: 5,
        };
        assert_eq!(g1.positions(), 576);
        assert_eq!(im2col_map(&vec![0.0_f64; 784], &g1).unwrap().cols(), 576);
        let g2 = ConvGeometry {
            channels: 16,
            height: 12,
            width: 12,
            kernel: 5,
        };
        assert_eq!(g2.positions(), 64);
        assert_eq!(g2.patch_len() + 1, 401);
    }

    #[test]
    fn conv_as_matmul_matches_direct_convolution() {
        let g = ConvGeometry {
            channels: 2,
            height: 5,
            width: 4,
            kernel: 3,
        };
        let input: Vec<f64> = (0..g.input_len()).map(|v| ((v * 7) % 11) as f64 - 5.0).collect();
        let kernel: Vec<f64> = (0..g.patch_len()).map(|v| (v as f64 - 8.0) / 10.0).collect();
        let cols = im2col_columns(&input, &g).unwrap();
        for oy in 0..g.out_height() {
            for ox in 0..g.out_width() {
                let mut direct = 0.0;
                for c in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            direct += kernel[c * 9 + ky * 3 + kx] * input[c * 20 + (oy + ky) * 4 + ox + kx];
                        }
                    }
                }
                let col = &cols[oy * g.out_width() + ox];
                let via: f64 = kernel.iter().zip(col).map(|(a, b)| a * b).sum();
                assert!((direct - via).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        let g = ConvGeometry {
            channels: 2,
            height: 4,
            width: 5,
            kernel: 2,
        };
        let x: Vec<f64> = (0..g.input_len()).map(|v| (v as f64).sin()).collect();
        let cols = im2col_columns(&x, &g).unwrap();
        let y: Vec<Vec<f64>> = (0..g.positions())
            .map(|p| (0..=g.patch_len()).map(|i| ((p * 31 + i) as f64).cos()).collect())
            .collect();
        let lhs: f64 = cols
            .iter()
            .zip(&y)
            .map(|(c, yy)| c[..g.patch_len()].iter().zip(yy).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let back = col2im(&y, &g);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pooling_routes_gradient_to_max() {
        let input = [1.0, 5.0, 2.0, 0.0, 3.0, 4.0, -1.0, 7.0];
        let (out, arg) = max_pool(&input, 2, 2, 2, 2);
        assert_eq!(out, vec![5.0, 7.0]);
        let back = max_pool_backward(&[1.0, 2.0], &arg, 8);
        assert_eq!(back, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let g = ConvGeometry {
            channels: 1,
            height: 4,
            width: 4,
            kernel: 3,
        };
        assert!(im2col_columns(&[0.0_f64; 15], &g).is_err());
    }
}
