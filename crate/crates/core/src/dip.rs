//! Deep-image-prior upsampling: an encoder/decoder generator with skip
//! branches, driven from fixed noise and fitted per sample to the observed
//! low-resolution cube (and optionally the PAN image through a learned
//! spectral response).

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use hsfuse_nn::{par, Adam, AdamConfig, AxisMap, Graph, Padding, ParamStore, Real, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{validate_sample, FusionSample, HsiCube, PanImage};
use crate::degrade::{blur_decimate_axis, DegradeSpec, SIGMA_PER_BETA};
use crate::error::{CoreError, Result};
use crate::layers::{Bn, Conv, ConvBnAct, StatsSink};
use crate::resample::lanczos2_decimate_axis;
use crate::srf::{SrfConfig, SrfModule, SrfParams};

/// The operator `d(.)` mapping a high-resolution cube to the low-resolution grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Degradation {
    /// Same Gaussian blur and decimation that produced the observation.
    Matched { kernel_size: usize, sigma_per_beta: f64 },
    /// Windowed-sinc (a = 2) decimation.
    Lanczos2,
}

impl Default for Degradation {
    fn default() -> Self {
        Self::Matched { kernel_size: crate::degrade::DEFAULT_KERNEL_SIZE, sigma_per_beta: SIGMA_PER_BETA }
    }
}

impl Degradation {
    pub fn axis(&self, n: usize, beta: usize) -> Result<AxisMap> {
        match self {
            Self::Matched { kernel_size, sigma_per_beta } => {
                let spec = DegradeSpec::new(beta, 1).with_kernel_size(*kernel_size).with_sigma(sigma_per_beta * beta as f64);
                blur_decimate_axis(n, &spec)
            }
            Self::Lanczos2 => lanczos2_decimate_axis(n, beta),
        }
    }

    /// Row and column maps for an `h x w` high-resolution grid.
    pub fn maps(&self, h: usize, w: usize, beta: usize) -> Result<(Arc<AxisMap>, Arc<AxisMap>)> {
        Ok((Arc::new(self.axis(h, beta)?), Arc::new(self.axis(w, beta)?)))
    }

    /// Apply to a whole cube.
    pub fn apply(&self, x: &HsiCube, beta: usize) -> Result<HsiCube> {
        let (rows, cols) = self.maps(x.height(), x.width(), beta)?;
        HsiCube::from_tensor(&hsfuse_nn::resample_forward(&x.to_tensor::<f64>(), &rows, &cols))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Spectral fidelity plus the PAN term weighted by `lambda`.
    #[default]
    Qss,
    /// Spectral fidelity only.
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DipConfig {
    pub noise_channels: usize,
    pub noise_range: [f64; 2],
    pub down_widths: Vec<usize>,
    pub down_kernels: Vec<usize>,
    pub up_widths: Vec<usize>,
    pub up_kernels: Vec<usize>,
    pub skip_widths: Vec<usize>,
    pub skip_kernels: Vec<usize>,
    pub iterations: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub leaky_slope: f64,
    pub lambda: f64,
    pub seed: u64,
    pub objective: Objective,
    pub degradation: Degradation,
    pub srf: SrfConfig,
    pub freeze_srf: bool,
    /// Samples optimized concurrently (each with its own generator).
    pub batch_size: usize,
    /// Run the generator on the next size divisible by `2^depth` and crop,
    /// instead of rejecting such sizes.
    pub pad_to_multiple: bool,
}

impl Default for DipConfig {
    fn default() -> Self {
        Self {
            noise_channels: 32,
            noise_range: [0.0, 0.1],
            down_widths: vec![128; 5],
            down_kernels: vec![3; 5],
            up_widths: vec![128; 5],
            up_kernels: vec![3; 5],
            skip_widths: vec![4; 5],
            skip_kernels: vec![1; 5],
            iterations: 1300,
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            leaky_slope: 0.2,
            lambda: 0.8,
            seed: 0,
            objective: Objective::Qss,
            degradation: Degradation::default(),
            srf: SrfConfig::default(),
            freeze_srf: false,
            batch_size: 4,
            pad_to_multiple: true,
        }
    }
}

impl DipConfig {
    pub fn depth(&self) -> usize {
        self.down_widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.depth();
        if d == 0 {
            return Err(CoreError::invalid("generator needs at least one level"));
        }
        for (name, v) in [
            ("down_kernels", &self.down_kernels),
            ("up_widths", &self.up_widths),
            ("up_kernels", &self.up_kernels),
            ("skip_widths", &self.skip_widths),
            ("skip_kernels", &self.skip_kernels),
        ] {
            if v.len() != d {
                return Err(CoreError::mismatch(format!("{name} length"), d, v.len()));
            }
        }
        let widths = self.down_widths.iter().chain(&self.up_widths).chain(&self.skip_widths);
        if self.noise_channels == 0 || widths.into_iter().any(|&w| w == 0) {
            return Err(CoreError::invalid("all widths must be at least 1"));
        }
        let kernels = self.down_kernels.iter().chain(&self.up_kernels).chain(&self.skip_kernels);
        if kernels.into_iter().any(|&k| k % 2 == 0) {
            return Err(CoreError::invalid("kernel sizes must be odd"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CoreError::invalid(format!("lambda must be a finite value >= 0, got {}", self.lambda)));
        }
        if self.iterations == 0 {
            return Err(CoreError::invalid("iterations must be at least 1"));
        }
        if !(self.noise_range[0] <= self.noise_range[1]) {
            return Err(CoreError::invalid("noise range is empty"));
        }
        if self.batch_size == 0 {
            return Err(CoreError::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: 1e-8, weight_decay: self.weight_decay }
    }
}

struct Level {
    skip: ConvBnAct,
    down1: ConvBnAct,
    down2: ConvBnAct,
    cat_bn: Bn,
    up1: ConvBnAct,
    up2: ConvBnAct,
}

/// The generator `f_theta`.
pub struct DipGenerator<T> {
    pub store: ParamStore<T>,
    levels: Vec<Level>,
    head: Conv,
    pub in_channels: usize,
    pub out_bands: usize,
}

impl<T: Real> DipGenerator<T> {
    pub fn build<R: Rng + ?Sized>(config: &DipConfig, out_bands: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if out_bands == 0 {
            return Err(CoreError::invalid("output band count must be at least 1"));
        }
        let mut store = ParamStore::new();
        let slope = config.leaky_slope;
        let pad = Padding::Reflect;
        let d = config.depth();
        let mut levels = Vec::with_capacity(d);
        for i in 0..d {
            let cin = if i == 0 { config.noise_channels } else { config.down_widths[i - 1] };
            let nd = config.down_widths[i];
            let (kd, ku, ks) = (config.down_kernels[i], config.up_kernels[i], config.skip_kernels[i]);
            let ns = config.skip_widths[i];
            let deeper = if i + 1 < d { config.up_widths[i + 1] } else { nd };
            let nu = config.up_widths[i];
            let s = &mut store;
            levels.push(Level {
                skip: ConvBnAct::new(s, rng, &format!("l{i}.skip"), cin, ns, ks, 1, pad, slope),
                down1: ConvBnAct::new(s, rng, &format!("l{i}.down1"), cin, nd, kd, 2, pad, slope),
                down2: ConvBnAct::new(s, rng, &format!("l{i}.down2"), nd, nd, kd, 1, pad, slope),
                cat_bn: Bn::new(s, &format!("l{i}.cat_bn"), ns + deeper),
                up1: ConvBnAct::new(s, rng, &format!("l{i}.up1"), ns + deeper, nu, ku, 1, pad, slope),
                up2: ConvBnAct::new(s, rng, &format!("l{i}.up2"), nu, nu, 1, 1, pad, slope),
            });
        }
        let head = Conv::new(&mut store, rng, "head", config.up_widths[0], out_bands, 1, 1, pad, true);
        Ok(Self { store, levels, head, in_channels: config.noise_channels, out_bands })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Smallest sizes `>= (h, w)` the encoder accepts.
    pub fn padded_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let m = 1usize << self.depth();
        (h.div_ceil(m) * m, w.div_ceil(m) * m)
    }

    /// Reject spatial sizes the encoder cannot halve `depth` times.
    pub fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        let m = 1usize << self.depth();
        if h == 0 || h % m != 0 {
            return Err(CoreError::invalid(format!("height {h} is not divisible by {m}")));
        }
        if w == 0 || w % m != 0 {
            return Err(CoreError::invalid(format!("width {w} is not divisible by {m}")));
        }
        Ok(())
    }

    fn level(&self, g: &mut Graph<T>, st: &ParamStore<T>, i: usize, x: Var, sink: &mut StatsSink) -> Var {
        let lv = &self.levels[i];
        let skip = lv.skip.forward(g, st, x, sink);
        let d = lv.down1.forward(g, st, x, sink);
        let mut d = lv.down2.forward(g, st, d, sink);
        if i + 1 < self.levels.len() {
            d = self.level(g, st, i + 1, d, sink);
        }
        let (_, _, h, w) = g.value(x).dims4();
        let up = g.bilinear_resize(d, h, w);
        let cat = g.concat_channels(&[skip, up]);
        let cat = lv.cat_bn.forward(g, st, cat, sink);
        let u = lv.up1.forward(g, st, cat, sink);
        lv.up2.forward(g, st, u, sink)
    }

    /// `f_theta(z)`: `[n, noise, h, w] -> [n, bands, h, w]` in `(0, 1)`.
    pub fn forward(&self, g: &mut Graph<T>, z: Var) -> Var {
        self.forward_with(g, &self.store, z)
    }

    /// [`Self::forward`] reading weights from `store` (same layout as `self.store`).
    pub fn forward_with(&self, g: &mut Graph<T>, store: &ParamStore<T>, z: Var) -> Var {
        let mut sink = StatsSink::default();
        let feat = self.level(g, store, 0, z, &mut sink);
        let out = self.head.forward(g, store, feat);
        g.sigmoid(out)
    }

    /// Forward pass without gradient tracking.
    pub fn generate(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, h, w) = z.dims4();
        if c != self.in_channels {
            return Err(CoreError::mismatch("noise channels", self.in_channels, c));
        }
        self.check_dims(h, w)?;
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let out = self.forward(&mut g, zv);
        Ok(g.take_value(out))
    }
}

/// Per-call energy breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub spectral: f64,
    pub spatial: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub spectral: f64,
    pub spatial: f64,
    pub total: f64,
}

/// Observations and operators for one energy evaluation inside a graph.
pub struct EnergyInputs<T> {
    pub y: Tensor<T>,
    pub pan: Tensor<T>,
    pub rows: Arc<AxisMap>,
    pub cols: Arc<AxisMap>,
    pub lambda: f64,
    pub objective: Objective,
}

pub struct EnergyVars {
    pub spectral: Var,
    pub spatial: Var,
    pub total: Var,
}

/// Build the energy for the cube `x` (`[1, l, H, W]`). The PAN term is always
/// computed for the trace but only enters the total under [`Objective::Qss`].
pub fn energy_graph<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    srf: &SrfModule,
    x: Var,
    inputs: &EnergyInputs<T>,
) -> EnergyVars {
    let down = g.resample(x, inputs.rows.clone(), inputs.cols.clone());
    let spectral = g.l1_mean(down, &inputs.y);
    let spatial = srf.spatial_energy_var(g, store, x, &inputs.pan);
    let total = match inputs.objective {
        Objective::Qss => {
            let weighted = g.scale(spatial, inputs.lambda);
            g.add(spectral, weighted)
        }
        Objective::Spectral => spectral,
    };
    EnergyVars { spectral, spatial, total }
}

fn check_hr(x: &HsiCube, y: &HsiCube, beta: usize) -> Result<()> {
    if beta == 0 {
        return Err(CoreError::invalid("beta must be positive"));
    }
    if x.bands() != y.bands() {
        return Err(CoreError::mismatch("bands", y.bands(), x.bands()));
    }
    if x.height() != beta * y.height() {
        return Err(CoreError::mismatch("height", beta * y.height(), x.height()));
    }
    if x.width() != beta * y.width() {
        return Err(CoreError::mismatch("width", beta * y.width(), x.width()));
    }
    Ok(())
}

/// Mean absolute difference between `d(x_dip)` and `y`.
pub fn spectral_energy(x_dip: &HsiCube, y: &HsiCube, beta: usize, degradation: &Degradation) -> Result<f64> {
    check_hr(x_dip, y, beta)?;
    let (rows, cols) = degradation.maps(x_dip.height(), x_dip.width(), beta)?;
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x_dip.to_tensor());
    let down = g.resample(xv, rows, cols);
    let e = g.l1_mean(down, &y.to_tensor());
    Ok(g.value(e).item())
}

/// Spectral energy plus `lambda` times the PAN prediction error.
pub fn qss_energy(
    x_dip: &HsiCube,
    y: &HsiCube,
    pan: &PanImage,
    srf: &SrfParams,
    lambda: f64,
    beta: usize,
    degradation: &Degradation,
) -> Result<EnergyTerms> {
    check_hr(x_dip, y, beta)?;
    if (pan.height(), pan.width()) != (x_dip.height(), x_dip.width()) {
        return Err(CoreError::mismatch("pan height", x_dip.height(), pan.height()));
    }
    let (rows, cols) = degradation.maps(x_dip.height(), x_dip.width(), beta)?;
    let mut store = ParamStore::<f64>::new();
    let module = SrfModule::register(&mut store, srf)?;
    let inputs = EnergyInputs { y: y.to_tensor(), pan: pan.to_tensor(), rows, cols, lambda, objective: Objective::Qss };
    let mut g = Graph::new();
    let xv = g.constant(x_dip.to_tensor());
    let e = energy_graph(&mut g, &store, &module, xv, &inputs);
    Ok(EnergyTerms { spectral: g.value(e.spectral).item(), spatial: g.value(e.spatial).item(), total: g.value(e.total).item() })
}

/// Keep the leading `n` of `padded` samples.
fn crop_axis(padded: usize, n: usize) -> AxisMap {
    AxisMap { input_len: padded, taps: (0..n).map(|i| vec![(i, 1.0)]).collect() }
}

/// Optimization state of one sample.
pub struct DipState<T> {
    pub z: Tensor<T>,
    pub generator: DipGenerator<T>,
    pub srf: SrfModule,
    pub iteration: usize,
    pub energy_trace: Vec<TraceRow>,
    /// Energy of the returned cube.
    pub final_energy: EnergyTerms,
}

impl<T: Real> DipState<T> {
    pub fn srf_params(&self) -> SrfParams {
        self.srf.snapshot(&self.generator.store)
    }
}

/// Stable digest of a tensor's bit pattern.
pub fn tensor_digest<T: Real>(t: &Tensor<T>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    t.shape().hash(&mut h);
    for v in t.data() {
        v.f64().to_bits().hash(&mut h);
    }
    h.finish()
}

/// Uniform noise `[1, channels, h, w]`.
pub fn sample_noise<T: Real, R: Rng + ?Sized>(rng: &mut R, channels: usize, h: usize, w: usize, range: [f64; 2]) -> Tensor<T> {
    let data = (0..channels * h * w).map(|_| T::of(rng.gen_range(range[0]..=range[1]))).collect();
    Tensor::from_vec(&[1, channels, h, w], data)
}

fn terms<T: Real>(g: &Graph<T>, e: &EnergyVars) -> EnergyTerms {
    EnergyTerms {
        spectral: g.value(e.spectral).item().f64(),
        spatial: g.value(e.spatial).item().f64(),
        total: g.value(e.total).item().f64(),
    }
}

/// Fit the generator to one sample; returns `f_theta*(z)` and the state.
pub fn optimize_dip(sample: &FusionSample, config: &DipConfig) -> Result<(HsiCube, DipState<f32>)> {
    optimize_dip_as::<f32>(sample, config)
}

/// [`optimize_dip`] at a chosen precision.
pub fn optimize_dip_as<T: Real>(sample: &FusionSample, config: &DipConfig) -> Result<(HsiCube, DipState<T>)> {
    validate_sample(sample)?;
    config.validate()?;
    let (l, _, _) = sample.lr_hsi.dim();
    let (h, w) = sample.hr_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut generator = DipGenerator::<T>::build(config, l, &mut rng)?;
    let (hp, wp) = if config.pad_to_multiple { generator.padded_dims(h, w) } else { (h, w) };
    generator.check_dims(hp, wp)?;
    let z = sample_noise::<T, _>(&mut rng, config.noise_channels, hp, wp, config.noise_range);
    let crop = (hp != h || wp != w).then(|| (Arc::new(crop_axis(hp, h)), Arc::new(crop_axis(wp, w))));
    let fit = |g: &mut Graph<T>, x: Var| match &crop {
        Some((r, c)) => g.resample(x, r.clone(), c.clone()),
        None => x,
    };
    let srf_init = SrfParams { trainable: !config.freeze_srf, ..SrfParams::random(&mut rng, l, &config.srf) };
    let srf = SrfModule::register(&mut generator.store, &srf_init)?;

    let (rows, cols) = config.degradation.maps(h, w, sample.beta)?;
    let inputs = EnergyInputs {
        y: sample.lr_hsi.to_tensor(),
        pan: sample.pan.to_tensor(),
        rows,
        cols,
        lambda: config.lambda,
        objective: config.objective,
    };
    let mut adam = Adam::new(config.adam());
    let mut trace = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let x = generator.forward(&mut g, zv);
        let x = fit(&mut g, x);
        let e = energy_graph(&mut g, &generator.store, &srf, x, &inputs);
        let t = terms(&g, &e);
        if !t.total.is_finite() {
            return Err(CoreError::Diverged {
                step: it,
                detail: format!("spectral={} spatial={} total={}", t.spectral, t.spatial, t.total),
            });
        }
        trace.push(TraceRow { iteration: it, spectral: t.spectral, spatial: t.spatial, total: t.total });
        let grads = g.backward(e.total).params();
        drop(g);
        adam.step(&mut generator.store, &grads);
        if it % 100 == 0 {
            log::debug!("{} it {it}: spectral {:.5} spatial {:.5}", sample.patch_id, t.spectral, t.spatial);
        }
    }

    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let x = generator.forward(&mut g, zv);
    let x = fit(&mut g, x);
    let e = energy_graph(&mut g, &generator.store, &srf, x, &inputs);
    let final_energy = terms(&g, &e);
    if !final_energy.total.is_finite() {
        return Err(CoreError::Diverged {
            step: config.iterations,
            detail: format!("final spectral={} spatial={}", final_energy.spectral, final_energy.spatial),
        });
    }
    let out = HsiCube::from_tensor(g.value(x))?;
    let state = DipState { z, generator, srf, iteration: config.iterations, energy_trace: trace, final_energy };
    Ok((out, state))
}

/// Optimize independent instances, `config.batch_size` at a time.
pub fn optimize_many(samples: &[FusionSample], config: &DipConfig) -> Vec<Result<(HsiCube, DipState<f32>)>> {
    let mut out = Vec::with_capacity(samples.len());
    for group in samples.chunks(config.batch_size.max(1)) {
        out.extend(par::map_slice(group, |s| optimize_dip(s, config)));
    }
    out
}
