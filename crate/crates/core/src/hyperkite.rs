//! Over-complete residual refinement network. The encoder upsamples the
//! features to 2x, 4x and 8x the input grid so deeper filters see smaller
//! input areas; the decoder comes back down with skip concatenations and a
//! final convolution predicts the residual `x_ref - x_dip`.

use std::path::Path;

use hsfuse_nn::{par, Adam, AdamConfig, Graph, Padding, ParamStore, Real, Tensor, Var};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointHeader};
use crate::datamodel::{HsiCube, PanImage};
use crate::error::{CoreError, Result};
use crate::layers::{Conv, ConvBnAct, StatsSink};

pub const MODEL_NAME: &str = "hyperkite";

/// Input-pixel area covered by a `k x k` filter at layer `i` (1-based) when
/// every layer doubles the resolution.
pub fn receptive_field(i: usize, k: usize) -> f64 {
    assert!(i >= 1 && k >= 1, "layer index and kernel size start at 1");
    0.25f64.powi(i as i32 - 1) * (k * k) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    /// Core tile edge in input pixels.
    pub size: usize,
    /// Context added on every side and cropped away afterwards.
    pub overlap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperKiteConfig {
    /// Seven layer widths; the last one is the band count (0 = take it from the data).
    pub widths: Vec<usize>,
    pub kernels: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub leaky_slope: f64,
    pub seed: u64,
    pub tile: Option<TileConfig>,
    /// Start the final convolution at zero so the untrained net predicts no residual.
    pub zero_init_residual: bool,
}

impl Default for HyperKiteConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128, 128, 64, 32, 0],
            kernels: vec![3; 7],
            epochs: 2500,
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 4,
            leaky_slope: 0.2,
            seed: 0,
            tile: None,
            zero_init_residual: true,
        }
    }
}

impl HyperKiteConfig {
    /// Fill a zero output width with `bands`.
    pub fn resolved(&self, bands: usize) -> Self {
        let mut c = self.clone();
        if c.widths.len() == 7 && c.widths[6] == 0 {
            c.widths[6] = bands;
        }
        c
    }

    pub fn validate(&self, bands: usize) -> Result<()> {
        if self.widths.len() != 7 {
            return Err(CoreError::mismatch("width count", 7, self.widths.len()));
        }
        if self.kernels.len() != 7 {
            return Err(CoreError::mismatch("kernel count", 7, self.kernels.len()));
        }
        if self.widths[6] != bands {
            return Err(CoreError::mismatch("output width", bands, self.widths[6]));
        }
        if self.widths.contains(&0) {
            return Err(CoreError::invalid("all widths must be at least 1"));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(CoreError::invalid("kernel sizes must be odd"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(CoreError::invalid("batch_size and epochs must be at least 1"));
        }
        if let Some(t) = self.tile {
            if t.size == 0 {
                return Err(CoreError::invalid("tile size must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: 1e-8, weight_decay: self.weight_decay }
    }
}

/// Intermediate activation with its scale relative to the input grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub name: &'static str,
    pub scale: usize,
    pub data: Array3<f32>,
}

/// `(name, channels, scale)` of every intermediate map, in forward order.
pub fn feature_layout(config: &HyperKiteConfig) -> Vec<(&'static str, usize, usize)> {
    let n = &config.widths;
    vec![
        ("F_D1", n[0], 1),
        ("F_D2", n[1], 2),
        ("F_D4", n[2], 4),
        ("F_D8", n[3], 8),
        ("Ft_D4", n[4], 4),
        ("Ft_D2", n[5], 2),
        ("Ft_D1", n[5], 1),
        ("residual", n[6], 1),
    ]
}

struct Taps {
    maps: [Var; 8],
}

pub struct HyperKite<T> {
    pub store: ParamStore<T>,
    pub config: HyperKiteConfig,
    ifen: ConvBnAct,
    enc: [ConvBnAct; 3],
    dec: [ConvBnAct; 2],
    frrn: Conv,
    pub bands: usize,
}

fn up2<T: Real>(g: &mut Graph<T>, x: Var) -> Var {
    let (_, _, h, w) = g.value(x).dims4();
    g.bilinear_resize(x, 2 * h, 2 * w)
}

fn down2<T: Real>(g: &mut Graph<T>, x: Var) -> Var {
    let (_, _, h, w) = g.value(x).dims4();
    g.bilinear_resize(x, h / 2, w / 2)
}

impl<T: Real> HyperKite<T> {
    pub fn new(config: &HyperKiteConfig, bands: usize) -> Result<Self> {
        let config = config.resolved(bands);
        config.validate(bands)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (n, k, a) = (&config.widths, &config.kernels, config.leaky_slope);
        let z = Padding::Zero;
        let s = &mut store;
        let ifen = ConvBnAct::new(s, &mut rng, "ifen", bands + 1, n[0], k[0], 1, z, a);
        let enc = [
            ConvBnAct::new(s, &mut rng, "enc1", n[0], n[1], k[1], 1, z, a),
            ConvBnAct::new(s, &mut rng, "enc2", n[1], n[2], k[2], 1, z, a),
            ConvBnAct::new(s, &mut rng, "enc3", n[2], n[3], k[3], 1, z, a),
        ];
        let dec = [
            ConvBnAct::new(s, &mut rng, "dec1", n[3] + n[2], n[4], k[4], 1, z, a),
            ConvBnAct::new(s, &mut rng, "dec2", n[4] + n[1], n[5], k[5], 1, z, a),
        ];
        let frrn = Conv::new(s, &mut rng, "frrn", n[5] + n[0], n[6], k[6], 1, z, true);
        if config.zero_init_residual {
            for name in ["frrn.weight", "frrn.bias"] {
                let id = store.find(name).expect("frrn parameters registered");
                store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
        }
        Ok(Self { store, config, ifen, enc, dec, frrn, bands })
    }

    fn run(&self, g: &mut Graph<T>, x_in: Var, sink: &mut StatsSink) -> Taps {
        let st = &self.store;
        let f1 = self.ifen.forward(g, st, x_in, sink);
        let u = up2(g, f1);
        let f2 = self.enc[0].forward(g, st, u, sink);
        let u = up2(g, f2);
        let f4 = self.enc[1].forward(g, st, u, sink);
        let u = up2(g, f4);
        let f8 = self.enc[2].forward(g, st, u, sink);

        let d = down2(g, f8);
        let cat = g.concat_channels(&[d, f4]);
        let t4 = self.dec[0].forward(g, st, cat, sink);
        let d = down2(g, t4);
        let cat = g.concat_channels(&[d, f2]);
        let t2 = self.dec[1].forward(g, st, cat, sink);
        let t1 = down2(g, t2);
        let cat = g.concat_channels(&[t1, f1]);
        let out = self.frrn.forward(g, st, cat);
        Taps { maps: [f1, f2, f4, f8, t4, t2, t1, out] }
    }

    /// Residual for an input batch `[n, bands + 1, h, w]`.
    pub fn forward(&self, g: &mut Graph<T>, x_in: Var, sink: &mut StatsSink) -> Var {
        self.run(g, x_in, sink).maps[7]
    }

    /// Inference with running statistics on one `(x_dip, pan)` pair.
    pub fn infer(&self, x_dip: &HsiCube, pan: &PanImage) -> Result<HsiCube> {
        let input = stack_input::<T>(x_dip, pan, self.bands)?;
        let out = match self.config.tile {
            None => self.infer_tensor(&input),
            Some(tile) => self.infer_tiled(&input, tile),
        };
        residual_cube(&out)
    }

    fn infer_tensor(&self, input: &Tensor<T>) -> Tensor<T> {
        let mut g = Graph::eval();
        let x = g.constant(input.clone());
        let mut sink = StatsSink::default();
        let out = self.forward(&mut g, x, &mut sink);
        g.take_value(out)
    }

    fn infer_tiled(&self, input: &Tensor<T>, tile: TileConfig) -> Tensor<T> {
        let (_, c, h, w) = input.dims4();
        let l = self.bands;
        let mut out = vec![T::zero(); l * h * w];
        let starts = |n: usize| (0..n).step_by(tile.size).collect::<Vec<_>>();
        let jobs: Vec<(usize, usize)> =
            starts(h).into_iter().flat_map(|r| starts(w).into_iter().map(move |c0| (r, c0))).collect();
        let results = par::map_slice(&jobs, |&(r0, c0)| {
            let (r1, c1) = ((r0 + tile.size).min(h), (c0 + tile.size).min(w));
            let (pr0, pc0) = (r0.saturating_sub(tile.overlap), c0.saturating_sub(tile.overlap));
            let (pr1, pc1) = ((r1 + tile.overlap).min(h), (c1 + tile.overlap).min(w));
            let (th, tw) = (pr1 - pr0, pc1 - pc0);
            let mut data = Vec::with_capacity(c * th * tw);
            for ch in 0..c {
                for r in pr0..pr1 {
                    let base = (ch * h + r) * w;
                    data.extend_from_slice(&input.data()[base + pc0..base + pc1]);
                }
            }
            let t = self.infer_tensor(&Tensor::from_vec(&[1, c, th, tw], data));
            (r0, c0, r1, c1, pr0, pc0, tw, th, t)
        });
        for (r0, c0, r1, c1, pr0, pc0, tw, th, t) in results {
            for b in 0..l {
                for r in r0..r1 {
                    for col in c0..c1 {
                        out[(b * h + r) * w + col] = t.data()[(b * th + r - pr0) * tw + col - pc0];
                    }
                }
            }
        }
        Tensor::from_vec(&[1, l, h, w], out)
    }

    /// Every intermediate map of one inference pass.
    pub fn features(&self, x_dip: &HsiCube, pan: &PanImage) -> Result<Vec<FeatureMap>> {
        let input = stack_input::<T>(x_dip, pan, self.bands)?;
        let mut g = Graph::eval();
        let x = g.constant(input);
        let mut sink = StatsSink::default();
        let taps = self.run(&mut g, x, &mut sink);
        Ok(feature_layout(&self.config)
            .into_iter()
            .zip(taps.maps)
            .map(|((name, _, scale), v)| {
                let t = g.value(v);
                let (_, c, h, w) = t.dims4();
                let data = Array3::from_shape_vec((c, h, w), t.data().iter().map(|x| x.f64() as f32).collect())
                    .expect("tensor size");
                FeatureMap { name, scale, data }
            })
            .collect())
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let mut header = checkpoint::header_for(&self.store, MODEL_NAME, self.config.seed, serde_json::to_value(&self.config)?);
        header.extra = extra;
        checkpoint::save(path, &self.store, &header)
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let (header, tensors) = checkpoint::decode::<T>(&std::fs::read(path)?)?;
        if header.model != MODEL_NAME {
            return Err(CoreError::Checkpoint(format!("archive holds a '{}' model", header.model)));
        }
        let config: HyperKiteConfig = serde_json::from_value(header.config.clone())?;
        let bands = *config.widths.last().ok_or_else(|| CoreError::Checkpoint("empty widths".into()))?;
        let mut model = Self::new(&config, bands)?;
        checkpoint::restore(&mut model.store, &header, tensors)?;
        Ok((model, header))
    }
}

/// `[1, bands + 1, h, w]` concatenation of the cube and the PAN image.
pub fn stack_input<T: Real>(x_dip: &HsiCube, pan: &PanImage, bands: usize) -> Result<Tensor<T>> {
    if x_dip.bands() != bands {
        return Err(CoreError::mismatch("bands", bands, x_dip.bands()));
    }
    if pan.height() != x_dip.height() {
        return Err(CoreError::mismatch("pan height", x_dip.height(), pan.height()));
    }
    if pan.width() != x_dip.width() {
        return Err(CoreError::mismatch("pan width", x_dip.width(), pan.width()));
    }
    let (l, h, w) = x_dip.dim();
    let mut data: Vec<T> = x_dip.data().iter().map(|&v| T::of(v as f64)).collect();
    data.extend(pan.data().iter().map(|&v| T::of(v as f64)));
    Ok(Tensor::from_vec(&[1, l + 1, h, w], data))
}

fn residual_cube<T: Real>(t: &Tensor<T>) -> Result<HsiCube> {
    let (_, l, h, w) = t.dims4();
    let data = Array3::from_shape_vec((l, h, w), t.data().iter().map(|v| v.f64() as f32).collect()).expect("size");
    HsiCube::with_range(data, [-1.0, 1.0])
}

/// `x_dip + x_res` without clamping.
pub fn fuse_unclamped(x_dip: &HsiCube, x_res: &HsiCube) -> Result<HsiCube> {
    if x_dip.dim() != x_res.dim() {
        let (a, b) = (x_dip.dim(), x_res.dim());
        let axis = if a.0 != b.0 { ("bands", a.0, b.0) } else if a.1 != b.1 { ("height", a.1, b.1) } else { ("width", a.2, b.2) };
        return Err(CoreError::mismatch(axis.0, axis.1, axis.2));
    }
    HsiCube::with_range(x_dip.data() + x_res.data(), x_dip.value_range())
}

/// Fused cube `x_dip + x_res`, clamped to the value range of `x_dip`.
pub fn fuse(x_dip: &HsiCube, x_res: &HsiCube) -> Result<HsiCube> {
    Ok(fuse_unclamped(x_dip, x_res)?.clamped())
}

/// One training triple.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub x_dip: HsiCube,
    pub pan: PanImage,
    pub reference: HsiCube,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean L1 loss per epoch.
    pub loss_history: Vec<f64>,
}

struct Prepared<T> {
    input: Tensor<T>,
    target: Tensor<T>,
}

fn stack<T: Real>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let (_, c, h, w) = parts[0].dims4();
    let mut data = Vec::with_capacity(parts.len() * c * h * w);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[parts.len(), c, h, w], data)
}

/// Fit the residual on `samples` (mean L1 against `reference - x_dip`).
pub fn train<T: Real>(model: &mut HyperKite<T>, samples: &[TrainSample]) -> Result<TrainReport> {
    train_with(model, samples, |_, _| {})
}

/// [`train`] with a callback after every epoch `(epoch, mean loss)`.
pub fn train_with<T: Real>(
    model: &mut HyperKite<T>,
    samples: &[TrainSample],
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(CoreError::invalid("training needs at least one sample"));
    }
    let first = samples[0].x_dip.dim();
    let prepared: Vec<Prepared<T>> = samples
        .iter()
        .map(|s| {
            if s.x_dip.dim() != first {
                return Err(CoreError::mismatch("training sample height", first.1, s.x_dip.height()));
            }
            if s.reference.dim() != s.x_dip.dim() {
                return Err(CoreError::mismatch("reference bands", s.x_dip.bands(), s.reference.bands()));
            }
            let input = stack_input(&s.x_dip, &s.pan, model.bands)?;
            let diff = s.reference.data() - s.x_dip.data();
            let (l, h, w) = s.x_dip.dim();
            let target = Tensor::from_vec(&[1, l, h, w], diff.iter().map(|&v| T::of(v as f64)).collect());
            Ok(Prepared { input, target })
        })
        .collect::<Result<_>>()?;

    let config = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = Adam::new(config.adam());
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let input = stack(&batch.iter().map(|&i| &prepared[i].input).collect::<Vec<_>>());
            let target = stack(&batch.iter().map(|&i| &prepared[i].target).collect::<Vec<_>>());
            let mut g = Graph::new();
            let x = g.constant(input);
            let mut sink = StatsSink::default();
            let out = model.forward(&mut g, x, &mut sink);
            let loss = g.l1_mean(out, &target);
            let lv = g.value(loss).item().f64();
            if !lv.is_finite() {
                return Err(CoreError::Diverged { step: epoch, detail: format!("epoch {epoch} loss {lv}") });
            }
            total += lv * batch.len() as f64;
            let grads = g.backward(loss).params();
            drop(g);
            adam.step(&mut model.store, &grads);
            sink.apply(&mut model.store);
        }
        let mean = total / prepared.len() as f64;
        report.loss_history.push(mean);
        on_epoch(epoch, mean);
        if epoch % 50 == 0 {
            log::debug!("epoch {epoch}: loss {mean:.6}");
        }
    }
    if !model.store.all_finite() {
        return Err(CoreError::Diverged { step: config.epochs, detail: "non-finite weights after training".into() });
    }
    Ok(report)
}

/// Area (in input pixels) of the support of one output pixel of a probe net
/// that upsamples the input `depth - 1` times and applies a `k x k`
/// all-ones filter.
pub fn probe_support(depth: usize, k: usize, size: usize) -> usize {
    let mut g = Graph::<f64>::new();
    let x = g.variable(Tensor::full(&[1, 1, size, size], 1.0));
    let mut f = x;
    for _ in 1..depth {
        f = up2(&mut g, f);
    }
    let w = g.constant(Tensor::full(&[1, 1, k, k], 1.0));
    let f = g.conv2d(f, w, None, hsfuse_nn::Conv2dSpec::same(k, Padding::Zero));
    let (_, _, h, wd) = g.value(f).dims4();
    let mut pick = Tensor::zeros(&[1, 1, h, wd]);
    pick.data_mut()[(h / 2) * wd + wd / 2] = 1.0;
    let picked = g.mul_const(f, &pick);
    let root = g.sum_all(picked);
    let grads = g.backward(root);
    grads.get(x).map_or(0, |t| t.data().iter().filter(|v| v.abs() > 0.0).count())
}
