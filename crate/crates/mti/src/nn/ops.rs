//! Elementwise activations, nearest upsampling and channel concatenation.

use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use super::Tensor;

/// Output nonlinearity of a generator head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
    Sigmoid,
}

impl OutputActivation {
    /// Value range produced by the activation.
    pub fn range(self) -> (f64, f64) {
        match self {
            OutputActivation::Tanh => (-1.0, 1.0),
            OutputActivation::Sigmoid => (0.0, 1.0),
        }
    }

    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            OutputActivation::Tanh => x.mapv(f64::tanh),
            OutputActivation::Sigmoid => x.mapv(sigmoid),
        }
    }

    /// Backward given the activation *output* `y`.
    pub fn backward(self, y: &Tensor, dy: &Tensor) -> Tensor {
        match self {
            OutputActivation::Tanh => dy * &y.mapv(|v| 1.0 - v * v),
            OutputActivation::Sigmoid => dy * &y.mapv(|v| v * (1.0 - v)),
        }
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

/// Backward for leaky ReLU given the forward *input*.
pub fn leaky_relu_backward(x: &Tensor, dy: &Tensor, slope: f64) -> Tensor {
    ndarray::Zip::from(x)
        .and(dy)
        .map_collect(|&xv, &dv| if xv >= 0.0 { dv } else { slope * dv })
}

pub fn relu(x: &Tensor) -> Tensor {
    leaky_relu(x, 0.0)
}

pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    leaky_relu_backward(x, dy, 0.0)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2x(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.dim();
    Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(ni, ci, i, j)| x[[ni, ci, i / 2, j / 2]])
}

/// Backward of [`upsample2x`]: each source pixel collects its 2x2 block.
pub fn upsample2x_backward(dy: &Tensor) -> Tensor {
    let (n, c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h2 {
                for j in 0..w2 {
                    dx[[ni, ci, i / 2, j / 2]] += dy[[ni, ci, i, j]];
                }
            }
        }
    }
    dx
}

/// Concatenates along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("channel concat")
}

/// Splits a channel-axis gradient back into the two concatenated parts.
pub fn split_channels(dy: &Tensor, first: usize) -> (Tensor, Tensor) {
    let a = dy.slice(ndarray::s![.., ..first, .., ..]).to_owned();
    let b = dy.slice(ndarray::s![.., first.., .., ..]).to_owned();
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_backward_sums_blocks() {
        let dy = Array4::from_elem((1, 1, 4, 4), 1.0);
        let dx = upsample2x_backward(&dy);
        assert_eq!(dx, Array4::from_elem((1, 1, 2, 2), 4.0));
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Array4::from_elem((1, 2, 3, 3), 1.0);
        let b = Array4::from_elem((1, 3, 3, 3), 2.0);
        let y = concat_channels(&a, &b);
        assert_eq!(y.dim(), (1, 5, 3, 3));
        let (da, db) = split_channels(&y, 2);
        assert_eq!(da, a);
        assert_eq!(db, b);
    }

    #[test]
    fn leaky_relu_negative_slope() {
        let x = Array4::from_elem((1, 1, 1, 2), -2.0);
        let y = leaky_relu(&x, 0.2);
        assert!((y[[0, 0, 0, 0]] + 0.4).abs() < 1e-12);
    }
}
