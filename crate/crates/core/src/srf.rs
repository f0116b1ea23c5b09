//! Learnable spectral response: global average pooling per band, a
//! bias-free bottleneck (`w2 * relu(w1 * q)`), then normalization to band
//! weights that turn a cube into a predicted PAN image.

use hsfuse_nn::{uniform_fan_in, Graph, ParamId, ParamStore, Real, Tensor, Var};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{HsiCube, PanImage};
use crate::error::{CoreError, Result};

/// Output nonlinearity of the bottleneck.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrfActivation {
    /// Exponential normalization; weights are non-negative and sum to one.
    #[default]
    Softmax,
    /// Independent logistic gate per band; weights do not sum to one.
    Sigmoid,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SrfConfig {
    /// Hidden width; `None` picks `max(bands / 8, 4)`.
    pub bottleneck_dim: Option<usize>,
    pub activation: SrfActivation,
}

impl SrfConfig {
    pub fn hidden(&self, bands: usize) -> usize {
        self.bottleneck_dim.unwrap_or_else(|| (bands / 8).max(4))
    }
}

/// Bottleneck weights as plain matrices: `w1` is `hidden x bands`, `w2` is `bands x hidden`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrfParams {
    pub bands: usize,
    pub bottleneck_dim: usize,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub trainable: bool,
    #[serde(default)]
    pub activation: SrfActivation,
}

impl SrfParams {
    pub fn zeros(bands: usize, bottleneck_dim: usize) -> Self {
        Self {
            bands,
            bottleneck_dim,
            w1: vec![0.0; bottleneck_dim * bands],
            w2: vec![0.0; bands * bottleneck_dim],
            trainable: true,
            activation: SrfActivation::Softmax,
        }
    }

    /// Fan-in scaled uniform initialization.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, bands: usize, config: &SrfConfig) -> Self {
        let hidden = config.hidden(bands);
        let w1 = uniform_fan_in::<f64, _>(rng, &[hidden, bands], bands).into_data();
        let w2 = uniform_fan_in::<f64, _>(rng, &[bands, hidden], hidden).into_data();
        Self { bands, bottleneck_dim: hidden, w1, w2, trainable: true, activation: config.activation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bottleneck_dim == 0 || self.bands == 0 {
            return Err(CoreError::invalid("bottleneck and band counts must be at least 1"));
        }
        if self.w1.len() != self.bottleneck_dim * self.bands {
            return Err(CoreError::mismatch("w1 size", self.bottleneck_dim * self.bands, self.w1.len()));
        }
        if self.w2.len() != self.bottleneck_dim * self.bands {
            return Err(CoreError::mismatch("w2 size", self.bottleneck_dim * self.bands, self.w2.len()));
        }
        if self.w1.iter().chain(&self.w2).any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { what: "SRF weights".into(), index: vec![] });
        }
        Ok(())
    }

    pub fn w1_matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.bottleneck_dim, self.bands), self.w1.clone()).expect("validated")
    }

    pub fn w2_matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.bands, self.bottleneck_dim), self.w2.clone()).expect("validated")
    }
}

/// Per-band weights of the spectral response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralResponse {
    pub s: Vec<f64>,
}

impl SpectralResponse {
    pub fn uniform(bands: usize) -> Self {
        Self { s: vec![1.0 / bands as f64; bands] }
    }

    pub fn one_hot(bands: usize, j: usize) -> Self {
        let mut s = vec![0.0; bands];
        s[j] = 1.0;
        Self { s }
    }

    pub fn sum(&self) -> f64 {
        self.s.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.s.iter().all(|&v| v >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }
}

/// Graph-side handles to the bottleneck weights inside a model's store.
#[derive(Clone, Copy, Debug)]
pub struct SrfModule {
    pub w1: ParamId,
    pub w2: ParamId,
    pub bands: usize,
    pub hidden: usize,
    pub activation: SrfActivation,
}

impl SrfModule {
    pub fn register<T: Real>(store: &mut ParamStore<T>, params: &SrfParams) -> Result<Self> {
        params.validate()?;
        let to_t = |v: &[f64], shape: &[usize]| Tensor::from_vec(shape, v.iter().map(|&x| T::of(x)).collect());
        let w1 = store.add("srf.w1", to_t(&params.w1, &[params.bottleneck_dim, params.bands]));
        let w2 = store.add("srf.w2", to_t(&params.w2, &[params.bands, params.bottleneck_dim]));
        store.set_trainable(w1, params.trainable);
        store.set_trainable(w2, params.trainable);
        Ok(Self { w1, w2, bands: params.bands, hidden: params.bottleneck_dim, activation: params.activation })
    }

    /// Read the current weights back out of the store.
    pub fn snapshot<T: Real>(&self, store: &ParamStore<T>) -> SrfParams {
        SrfParams {
            bands: self.bands,
            bottleneck_dim: self.hidden,
            w1: store.get(self.w1).data().iter().map(|v| v.f64()).collect(),
            w2: store.get(self.w2).data().iter().map(|v| v.f64()).collect(),
            trainable: store.is_trainable(self.w1),
            activation: self.activation,
        }
    }

    /// `[n, bands]` descriptor -> `[n, bands]` response.
    pub fn excite_var<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, q: Var) -> Var {
        let w1 = g.param(store, self.w1);
        let w2 = g.param(store, self.w2);
        let hidden = g.linear(q, w1);
        let hidden = g.relu(hidden);
        let logits = g.linear(hidden, w2);
        match self.activation {
            SrfActivation::Softmax => g.softmax_rows(logits),
            SrfActivation::Sigmoid => g.sigmoid(logits),
        }
    }

    /// Predicted PAN `[n, 1, h, w]` of an NCHW cube.
    pub fn predict_pan_var<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let q = g.global_avg_pool(x);
        let s = self.excite_var(g, store, q);
        g.weighted_channel_sum(x, s)
    }

    /// Mean absolute difference between the predicted and observed PAN.
    pub fn spatial_energy_var<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, pan: &Tensor<T>) -> Var {
        let p_hat = self.predict_pan_var(g, store, x);
        g.l1_mean(p_hat, pan)
    }
}

/// Per-band global average.
pub fn squeeze(x: &HsiCube) -> Vec<f64> {
    let n = (x.height() * x.width()) as f64;
    (0..x.bands()).map(|b| x.band(b).iter().map(|&v| v as f64).sum::<f64>() / n).collect()
}

/// Bottleneck gating of a band descriptor.
pub fn excite(q: &[f64], params: &SrfParams) -> Result<SpectralResponse> {
    params.validate()?;
    if q.len() != params.bands {
        return Err(CoreError::mismatch("descriptor length", params.bands, q.len()));
    }
    let mut store = ParamStore::<f64>::new();
    let module = SrfModule::register(&mut store, params)?;
    let mut g = Graph::new();
    let qv = g.constant(Tensor::from_vec(&[1, q.len()], q.to_vec()));
    let s = module.excite_var(&mut g, &store, qv);
    Ok(SpectralResponse { s: g.value(s).data().to_vec() })
}

/// Pixelwise weighted sum of bands.
pub fn predict_pan(x: &HsiCube, s: &SpectralResponse) -> Result<PanImage> {
    if s.s.len() != x.bands() {
        return Err(CoreError::mismatch("response length", x.bands(), s.s.len()));
    }
    let (_, h, w) = x.dim();
    let mut acc = Array2::<f64>::zeros((h, w));
    for (b, &wt) in s.s.iter().enumerate() {
        acc.zip_mut_with(&x.band(b), |a, &v| *a += wt * v as f64);
    }
    PanImage::new(acc.mapv(|v| v as f32))
}

/// Spatial energy of a cube against a PAN image under the given weights.
pub fn spatial_energy(x: &HsiCube, pan: &PanImage, params: &SrfParams) -> Result<f64> {
    if (pan.height(), pan.width()) != (x.height(), x.width()) {
        return Err(CoreError::mismatch("pan height", x.height(), pan.height()));
    }
    let mut store = ParamStore::<f64>::new();
    let module = SrfModule::register(&mut store, params)?;
    let mut g = Graph::new();
    let xv = g.constant(x.to_tensor());
    let e = module.spatial_energy_var(&mut g, &store, xv, &pan.to_tensor());
    Ok(g.value(e).item())
}

/// Spatial energy and its gradients with respect to `(w1, w2)`.
pub fn spatial_energy_grad(x: &HsiCube, pan: &PanImage, params: &SrfParams) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut store = ParamStore::<f64>::new();
    let module = SrfModule::register(&mut store, &SrfParams { trainable: true, ..params.clone() })?;
    let mut g = Graph::new();
    let xv = g.constant(x.to_tensor());
    let e = module.spatial_energy_var(&mut g, &store, xv, &pan.to_tensor());
    let grads = g.backward(e).params();
    let find = |id: ParamId| -> Vec<f64> {
        grads.iter().find(|(p, _)| *p == id).map(|(_, t)| t.data().to_vec()).unwrap_or_default()
    };
    Ok((g.value(e).item(), find(module.w1), find(module.w2)))
}
