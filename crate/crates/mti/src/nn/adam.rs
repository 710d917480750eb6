//! Adam optimizer over [`HasParams`](super::HasParams) models.

use ndarray::ArrayD;

use super::HasParams;

/// Adam with bias correction. Moment buffers are keyed by the model's stable
/// parameter visitation order.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: Vec<(ArrayD<f64>, ArrayD<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            state: Vec::new(),
        }
    }

    /// Applies one update using the gradients currently stored in the model.
    pub fn step(&mut self, model: &mut impl HasParams) {
        self.t += 1;
        let t = self.t as i32;
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let state = &mut self.state;
        let mut idx = 0;
        model.visit_params(&mut |mut slot| {
            if state.len() <= idx {
                state.push((
                    ArrayD::zeros(slot.value.raw_dim()),
                    ArrayD::zeros(slot.value.raw_dim()),
                ));
            }
            let (m, v) = &mut state[idx];
            ndarray::Zip::from(&mut slot.value)
                .and(&slot.grad)
                .and(&mut *m)
                .and(&mut *v)
                .for_each(|p, &g, mi, vi| {
                    *mi = b1 * *mi + (1.0 - b1) * g;
                    *vi = b2 * *vi + (1.0 - b2) * g * g;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
            idx += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{HasParams, ParamSlot};
    use ndarray::Array1;

    struct Quadratic {
        x: Array1<f64>,
        g: Array1<f64>,
    }

    impl HasParams for Quadratic {
        fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
            f(ParamSlot {
                value: self.x.view_mut().into_dyn(),
                grad: self.g.view_mut().into_dyn(),
            });
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let mut q = Quadratic {
            x: Array1::from_elem(3, 5.0),
            g: Array1::zeros(3),
        };
        let mut opt = Adam::new(0.1, 0.9);
        for _ in 0..500 {
            q.g.assign(&q.x.mapv(|v| 2.0 * v));
            opt.step(&mut q);
        }
        assert!(q.x.iter().all(|v| v.abs() < 1e-3), "{:?}", q.x);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // with bias correction, |Δx| of the first step equals lr
        let mut q = Quadratic {
            x: Array1::from_elem(1, 1.0),
            g: Array1::from_elem(1, 0.5),
        };
        let mut opt = Adam::new(0.01, 0.9);
        opt.step(&mut q);
        assert!((q.x[0] - (1.0 - 0.01)).abs() < 1e-9);
    }
}
