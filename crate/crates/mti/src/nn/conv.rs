//! 2-D convolution with TensorFlow-style `same` padding, via im2col.

use ndarray::{Array1, Array2, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HasParams, ParamSlot, Tensor};

/// Padding before/after one spatial axis for `same` output sizing:
/// `out = ceil(in / stride)`, extra padding goes after (bottom/right).
pub fn same_pads(input: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(input);
    (total / 2, total - total / 2)
}

/// Convolution layer, weights `[out_ch, in_ch, k, k]`, stride `s`, `same`
/// padding. Initialization is N(0, 0.02), the usual choice for this GAN
/// family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    #[serde(skip)]
    pub grad_weight: Array4<f64>,
    #[serde(skip)]
    pub grad_bias: Array1<f64>,
}

impl Conv2d {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, k: usize, stride: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.02).unwrap();
        let weight = Array4::from_shape_simple_fn((out_ch, in_ch, k, k), || normal.sample(rng));
        Conv2d {
            weight,
            bias: Array1::zeros(out_ch),
            stride,
            grad_weight: Array4::zeros((out_ch, in_ch, k, k)),
            grad_bias: Array1::zeros(out_ch),
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().3
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    /// Restores gradient buffers after deserialization (serde skips them).
    pub fn ensure_grads(&mut self) {
        if self.grad_weight.dim() != self.weight.dim() {
            self.grad_weight = Array4::zeros(self.weight.dim());
        }
        if self.grad_bias.len() != self.bias.len() {
            self.grad_bias = Array1::zeros(self.bias.len());
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels(), "conv input channel mismatch");
        let k = self.kernel();
        let (ho, wo) = (h.div_ceil(self.stride), w.div_ceil(self.stride));
        let (pt, _) = same_pads(h, k, self.stride);
        let (pl, _) = same_pads(w, k, self.stride);
        let cols = im2col(x, k, self.stride, pt, pl, ho, wo);
        let out_ch = self.out_channels();
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((out_ch, c * k * k))
            .unwrap();
        let mut y2 = w2.dot(&cols);
        for (mut row, &b) in y2.outer_iter_mut().zip(self.bias.iter()) {
            row += b;
        }
        let y = y2.into_shape_with_order((out_ch, n, ho, wo)).unwrap();
        y.permuted_axes([1, 0, 2, 3]).as_standard_layout().to_owned()
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        let k = self.kernel();
        let (ho, wo) = (h.div_ceil(self.stride), w.div_ceil(self.stride));
        assert_eq!(dy.dim(), (n, self.out_channels(), ho, wo));
        let (pt, _) = same_pads(h, k, self.stride);
        let (pl, _) = same_pads(w, k, self.stride);
        let cols = im2col(x, k, self.stride, pt, pl, ho, wo);
        let out_ch = self.out_channels();
        let dy2 = dy
            .view()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .into_shape_with_order((out_ch, n * ho * wo))
            .unwrap()
            .to_owned();
        {
            let mut gw2 = self
                .grad_weight
                .view_mut()
                .into_shape_with_order((out_ch, c * k * k))
                .unwrap();
            gw2 += &dy2.dot(&cols.t());
            self.grad_bias += &dy2.sum_axis(Axis(1));
        }
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((out_ch, c * k * k))
            .unwrap();
        let dcols = w2.t().dot(&dy2);
        col2im(&dcols, (n, c, h, w), k, self.stride, pt, pl, ho, wo)
    }
}

impl HasParams for Conv2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        f(ParamSlot {
            value: self.weight.view_mut().into_dyn(),
            grad: self.grad_weight.view_mut().into_dyn(),
        });
        f(ParamSlot {
            value: self.bias.view_mut().into_dyn(),
            grad: self.grad_bias.view_mut().into_dyn(),
        });
    }
}

fn im2col(
    x: &Tensor,
    k: usize,
    stride: usize,
    pt: usize,
    pl: usize,
    ho: usize,
    wo: usize,
) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * k * k, n * ho * wo));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().unwrap();
    let ncols = n * ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let row_base = row * ncols;
                for ni in 0..n {
                    let x_base = (ni * c + ci) * h * w;
                    for oi in 0..ho {
                        let iy = (oi * stride + ki) as isize - pt as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * w;
                        let c_row = row_base + (ni * ho + oi) * wo;
                        for oj in 0..wo {
                            let ix = (oj * stride + kj) as isize - pl as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cs[c_row + oj] = xs[x_row + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    dcols: &Array2<f64>,
    xdim: (usize, usize, usize, usize),
    k: usize,
    stride: usize,
    pt: usize,
    pl: usize,
    ho: usize,
    wo: usize,
) -> Tensor {
    let (n, c, h, w) = xdim;
    let mut dx = Array4::zeros(xdim);
    let ds = dcols.as_slice().expect("standard layout");
    let xs = dx.as_slice_mut().unwrap();
    let ncols = n * ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let row_base = row * ncols;
                for ni in 0..n {
                    let x_base = (ni * c + ci) * h * w;
                    for oi in 0..ho {
                        let iy = (oi * stride + ki) as isize - pt as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * w;
                        let c_row = row_base + (ni * ho + oi) * wo;
                        for oj in 0..wo {
                            let ix = (oj * stride + kj) as isize - pl as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            xs[x_row + ix as usize] += ds[c_row + oj];
                        }
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_pads_match_tf_convention() {
        assert_eq!(same_pads(64, 3, 2), (0, 1));
        assert_eq!(same_pads(64, 3, 1), (1, 1));
        assert_eq!(same_pads(64, 4, 2), (1, 1));
        assert_eq!(same_pads(5, 3, 2), (1, 1));
    }

    #[test]
    fn identity_kernel_passthrough() {
        // 1x1 kernel with weight 1 and zero bias copies the input
        let mut conv = Conv2d::new(1, 1, 1, 1, &mut ChaCha8Rng::seed_from_u64(0));
        conv.weight.fill(1.0);
        conv.bias.fill(0.0);
        let x = Array4::from_shape_fn((2, 1, 4, 4), |(n, _, i, j)| (n * 16 + i * 4 + j) as f64);
        assert_eq!(conv.forward(&x), x);
    }

    #[test]
    fn known_3x3_convolution() {
        // 3x3 averaging kernel on a constant image stays constant
        let mut conv = Conv2d::new(1, 1, 3, 1, &mut ChaCha8Rng::seed_from_u64(0));
        conv.weight.fill(1.0 / 9.0);
        conv.bias.fill(0.0);
        let x = Array4::from_elem((1, 1, 5, 5), 3.0);
        let y = conv.forward(&x);
        // interior pixels see the full window
        assert!((y[[0, 0, 2, 2]] - 3.0).abs() < 1e-12);
        // corner sees only a 2x2 window of the padded image
        assert!((y[[0, 0, 0, 0]] - 3.0 * 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn stride_2_output_shape() {
        let conv = Conv2d::new(3, 8, 3, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let x = Array4::zeros((2, 3, 16, 16));
        assert_eq!(conv.forward(&x).dim(), (2, 8, 8, 8));
    }

    /// Finite-difference check of weight, bias and input gradients.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for stride in [1usize, 2] {
            let mut conv = Conv2d::new(2, 3, 3, stride, &mut rng);
            let x = Array4::from_shape_simple_fn((2, 2, 6, 6), || {
                rand::Rng::gen_range(&mut rng, -1.0..1.0)
            });
            // scalar objective: sum of squares of outputs
            let y = conv.forward(&x);
            let dy = y.mapv(|v| 2.0 * v);
            conv.zero_grads();
            let dx = conv.backward(&x, &dy);

            let loss = |c: &Conv2d, x: &Tensor| c.forward(x).mapv(|v| v * v).sum();
            let h = 1e-6;

            for idx in [0usize, 5, 17, conv.weight.len() - 1] {
                let base = conv.weight.as_slice().unwrap()[idx];
                conv.weight.as_slice_mut().unwrap()[idx] = base + h;
                let lp = loss(&conv, &x);
                conv.weight.as_slice_mut().unwrap()[idx] = base - h;
                let lm = loss(&conv, &x);
                conv.weight.as_slice_mut().unwrap()[idx] = base;
                let fd = (lp - lm) / (2.0 * h);
                let an = conv.grad_weight.as_slice().unwrap()[idx];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "w[{idx}] {fd} vs {an}");
            }
            for idx in 0..conv.bias.len() {
                let base = conv.bias[idx];
                conv.bias[idx] = base + h;
                let lp = loss(&conv, &x);
                conv.bias[idx] = base - h;
                let lm = loss(&conv, &x);
                conv.bias[idx] = base;
                let fd = (lp - lm) / (2.0 * h);
                let an = conv.grad_bias[idx];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "b[{idx}] {fd} vs {an}");
            }
            let mut xp = x.clone();
            for idx in [0usize, 31, 70] {
                let base = xp.as_slice().unwrap()[idx];
                xp.as_slice_mut().unwrap()[idx] = base + h;
                let lp = loss(&conv, &xp);
                xp.as_slice_mut().unwrap()[idx] = base - h;
                let lm = loss(&conv, &xp);
                xp.as_slice_mut().unwrap()[idx] = base;
                let fd = (lp - lm) / (2.0 * h);
                let an = dx.as_slice().unwrap()[idx];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "x[{idx}] {fd} vs {an}");
            }
        }
    }

    #[test]
    fn nearest_upsample_reference() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let x4 = x.insert_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
        let y = crate::nn::ops::upsample2x(&x4);
        assert_eq!(y.dim(), (1, 1, 4, 4));
        assert_eq!(y[[0, 0, 0, 1]], 1.0);
        assert_eq!(y[[0, 0, 3, 3]], 4.0);
    }
}
