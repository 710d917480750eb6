//! Minimal CNN numerics: convolution, batch normalization, resampling,
//! activations and Adam, all on `ndarray` with hand-written backward passes.
//!
//! Tensors are `f64` in `[N, C, H, W]` layout. Every layer keeps its own
//! parameters and gradient buffers; optimizers and finite-difference probes
//! reach them through [`HasParams::visit_params`], which enumerates arrays in
//! a stable order.

pub mod adam;
pub mod conv;
pub mod norm;
pub mod ops;

pub use adam::Adam;
pub use conv::Conv2d;
pub use norm::{BatchNorm2d, BnCache};

use ndarray::{Array4, ArrayViewMutD};

/// A 4-D activation tensor `[batch, channel, height, width]`.
pub type Tensor = Array4<f64>;

/// One trainable array paired with its gradient buffer.
pub struct ParamSlot<'a> {
    pub value: ArrayViewMutD<'a, f64>,
    pub grad: ArrayViewMutD<'a, f64>,
}

/// Enumerates trainable parameters in a stable, documented order.
pub trait HasParams {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>));

    /// Total number of trainable scalar parameters.
    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |slot| n += slot.value.len());
        n
    }

    fn zero_grads(&mut self) {
        self.visit_params(&mut |mut slot| slot.grad.fill(0.0));
    }

    /// Reads the parameter scalar at flat position `index` across the stable
    /// visit order. Panics when out of range.
    fn param_get(&mut self, index: usize) -> f64 {
        let mut remaining = index;
        let mut out = None;
        self.visit_params(&mut |slot| {
            if out.is_none() {
                if remaining < slot.value.len() {
                    out = Some(*slot.value.iter().nth(remaining).unwrap());
                } else {
                    remaining -= slot.value.len();
                }
            }
        });
        out.expect("parameter index out of range")
    }

    /// Adds `delta` to the parameter scalar at flat position `index`.
    fn param_nudge(&mut self, index: usize, delta: f64) {
        let mut remaining = index;
        let mut done = false;
        self.visit_params(&mut |mut slot| {
            if !done {
                if remaining < slot.value.len() {
                    *slot.value.iter_mut().nth(remaining).unwrap() += delta;
                    done = true;
                } else {
                    remaining -= slot.value.len();
                }
            }
        });
        assert!(done, "parameter index out of range");
    }

    /// Reads the gradient scalar at flat position `index`.
    fn grad_get(&mut self, index: usize) -> f64 {
        let mut remaining = index;
        let mut out = None;
        self.visit_params(&mut |slot| {
            if out.is_none() {
                if remaining < slot.grad.len() {
                    out = Some(*slot.grad.iter().nth(remaining).unwrap());
                } else {
                    remaining -= slot.grad.len();
                }
            }
        });
        out.expect("gradient index out of range")
    }
}
