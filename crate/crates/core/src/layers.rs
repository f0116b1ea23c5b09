//! Convolution and batch-norm building blocks shared by the generators.

use hsfuse_nn::{uniform_fan_in, BatchStats, Conv2dSpec, Graph, Padding, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;

/// Running statistics momentum (weight of the newest batch).
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub struct Bn {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl Bn {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full(&[channels], T::one())),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, sink: &mut StatsSink) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let running = (store.get(self.running_mean).data(), store.get(self.running_var).data());
        let (y, stats) = g.batch_norm(x, gamma, beta, Some(running));
        if let Some(stats) = stats {
            sink.0.push((*self, stats));
        }
        y
    }
}

/// Batch statistics gathered during one training forward pass.
#[derive(Default)]
pub struct StatsSink(pub Vec<(Bn, BatchStats)>);

impl StatsSink {
    /// Fold the gathered statistics into the running averages.
    pub fn apply<T: Real>(self, store: &mut ParamStore<T>) {
        for (bn, stats) in self.0 {
            for (r, m) in store.get_mut(bn.running_mean).data_mut().iter_mut().zip(&stats.mean) {
                *r = T::of((1.0 - BN_MOMENTUM) * r.f64() + BN_MOMENTUM * m);
            }
            for (r, v) in store.get_mut(bn.running_var).data_mut().iter_mut().zip(&stats.var_unbiased) {
                *r = T::of((1.0 - BN_MOMENTUM) * r.f64() + BN_MOMENTUM * v);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub kernel: usize,
    pub spec: Conv2dSpec,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let w = store.add(format!("{name}.weight"), uniform_fan_in(rng, &[cout, cin, kernel, kernel], fan_in));
        let b = bias.then(|| store.add(format!("{name}.bias"), uniform_fan_in(rng, &[cout], fan_in)));
        let mut spec = Conv2dSpec::same(kernel, padding);
        spec.stride = stride;
        Self { w, b, kernel, spec }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = self.b.map(|id| g.param(store, id));
        g.conv2d(x, w, b, self.spec)
    }
}

/// Convolution, batch norm, leaky ReLU.
#[derive(Clone, Copy, Debug)]
pub struct ConvBnAct {
    pub conv: Conv,
    pub bn: Bn,
    pub slope: f64,
}

impl ConvBnAct {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        slope: f64,
    ) -> Self {
        let conv = Conv::new(store, rng, name, cin, cout, kernel, stride, padding, true);
        let bn = Bn::new(store, &format!("{name}.bn"), cout);
        Self { conv, bn, slope }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, sink: &mut StatsSink) -> Var {
        let y = self.conv.forward(g, store, x);
        let y = self.bn.forward(g, store, y, sink);
        g.leaky_relu(y, self.slope)
    }
}
