use crate::{ParamId, ParamStore, Real, Tensor};

/// Adam hyperparameters. `weight_decay` is the coupled L2 form
/// (`g += wd * param` before the moment updates).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<Tensor<T>>>,
    second: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update for the given parameter gradients.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (wd, eps) = (T::of(c.weight_decay), T::of(c.eps));
        let step_size = T::of(c.lr / bc1);
        let bc2_sqrt = T::of(bc2.sqrt());
        for (id, grad) in grads {
            if !store.is_trainable(*id) {
                continue;
            }
            let slot = id.0;
            if self.first.len() <= slot {
                self.first.resize_with(slot + 1, || None);
                self.second.resize_with(slot + 1, || None);
            }
            let shape = grad.shape().to_vec();
            let m = self.first[slot].get_or_insert_with(|| Tensor::zeros(&shape));
            let v = self.second[slot].get_or_insert_with(|| Tensor::zeros(&shape));
            let p = store.get_mut(*id);
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((p, &g), (m, v)) in iter {
                let g = g + wd * *p;
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let denom = v.sqrt() / bc2_sqrt + eps;
                *p = *p - step_size * *m / denom;
            }
        }
    }
}
