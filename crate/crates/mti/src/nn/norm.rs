//! Batch normalization over `[N, C, H, W]`, per-channel statistics.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{HasParams, ParamSlot, Tensor};

/// Per-channel batch normalization with learnable scale/offset and running
/// statistics for evaluation mode. Training mode normalizes with biased batch
/// statistics; running buffers use the same convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    #[serde(skip)]
    pub grad_gamma: Array1<f64>,
    #[serde(skip)]
    pub grad_beta: Array1<f64>,
}

/// Values cached by the training-mode forward pass for the backward pass.
pub struct BnCache {
    xhat: Tensor,
    inv_std: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Number of non-trainable running-statistic scalars (mean + variance).
    pub fn running_stat_count(&self) -> usize {
        2 * self.channels()
    }

    pub fn ensure_grads(&mut self) {
        if self.grad_gamma.len() != self.gamma.len() {
            self.grad_gamma = Array1::zeros(self.gamma.len());
        }
        if self.grad_beta.len() != self.beta.len() {
            self.grad_beta = Array1::zeros(self.beta.len());
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BnCache) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels());
        let m = (n * h * w) as f64;
        let mut y = x.clone();
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(c);
        for ci in 0..c {
            let lane = x.slice(ndarray::s![.., ci, .., ..]);
            let mean = lane.sum() / m;
            let var = lane.mapv(|v| (v - mean) * (v - mean)).sum() / m;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = istd;
            self.running_mean[ci] =
                (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
            self.running_var[ci] =
                (1.0 - self.momentum) * self.running_var[ci] + self.momentum * var;
            let (g, b) = (self.gamma[ci], self.beta[ci]);
            let mut xh = xhat.slice_mut(ndarray::s![.., ci, .., ..]);
            xh.mapv_inplace(|v| (v - mean) * istd);
            let mut yl = y.slice_mut(ndarray::s![.., ci, .., ..]);
            yl.assign(&xh);
            yl.mapv_inplace(|v| v * g + b);
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let (_, c, _, _) = x.dim();
        assert_eq!(c, self.channels());
        let mut y = x.clone();
        for ci in 0..c {
            let istd = 1.0 / (self.running_var[ci] + self.eps).sqrt();
            let (mean, g, b) = (self.running_mean[ci], self.gamma[ci], self.beta[ci]);
            let mut yl = y.slice_mut(ndarray::s![.., ci, .., ..]);
            yl.mapv_inplace(|v| (v - mean) * istd * g + b);
        }
        y
    }

    /// Backward through the training-mode normalization (batch statistics are
    /// functions of the input, so their gradient terms are included).
    pub fn backward(&mut self, cache: &BnCache, dy: &Tensor) -> Tensor {
        let (n, c, h, w) = dy.dim();
        let m = (n * h * w) as f64;
        let mut dx = dy.clone();
        for ci in 0..c {
            let dyl = dy.slice(ndarray::s![.., ci, .., ..]);
            let xh = cache.xhat.slice(ndarray::s![.., ci, .., ..]);
            let sum_dy = dyl.sum();
            let sum_dy_xhat = (&dyl * &xh).sum();
            self.grad_gamma[ci] += sum_dy_xhat;
            self.grad_beta[ci] += sum_dy;
            let g_istd = self.gamma[ci] * cache.inv_std[ci];
            let mean_dy = sum_dy / m;
            let mean_dy_xhat = sum_dy_xhat / m;
            let mut dxl = dx.slice_mut(ndarray::s![.., ci, .., ..]);
            ndarray::Zip::from(&mut dxl).and(&dyl).and(&xh).for_each(|d, &dyv, &xhv| {
                *d = g_istd * (dyv - mean_dy - xhv * mean_dy_xhat);
            });
        }
        dx
    }
}

impl HasParams for BatchNorm2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        f(ParamSlot {
            value: self.gamma.view_mut().into_dyn(),
            grad: self.grad_gamma.view_mut().into_dyn(),
        });
        f(ParamSlot {
            value: self.beta.view_mut().into_dyn(),
            grad: self.grad_beta.view_mut().into_dyn(),
        });
    }
}
