//! Per-axis resampling kernels and the classical upsampling baselines.

use hsfuse_nn::{reflect_index, resample_forward, AxisMap};
use serde::{Deserialize, Serialize};

use crate::datamodel::HsiCube;
use crate::error::{CoreError, Result};

/// `sinc(x) * sinc(x / 2)` on `|x| < 2`.
pub fn lanczos2(x: f64) -> f64 {
    fn sinc(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            let p = std::f64::consts::PI * x;
            p.sin() / p
        }
    }
    if x.abs() >= 2.0 {
        0.0
    } else {
        sinc(x) * sinc(x / 2.0)
    }
}

/// Cubic convolution kernel with `a = -0.5` (Catmull-Rom).
pub fn catmull_rom(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

fn push_tap(row: &mut Vec<(usize, f64)>, idx: usize, w: f64) {
    match row.iter_mut().find(|(i, _)| *i == idx) {
        Some(e) => e.1 += w,
        None => row.push((idx, w)),
    }
}

/// Antialiased Lanczos2 decimation of `n` samples by `factor`
/// (kernel stretched by `factor`, weights normalized, reflect at edges).
pub fn lanczos2_decimate_axis(n: usize, factor: usize) -> Result<AxisMap> {
    if factor == 0 || n % factor != 0 {
        return Err(CoreError::invalid(format!("length {n} not divisible by factor {factor}")));
    }
    let f = factor as f64;
    let taps = (0..n / factor)
        .map(|o| {
            let center = (o as f64 + 0.5) * f - 0.5;
            let lo = (center - 2.0 * f).floor() as isize;
            let hi = (center + 2.0 * f).ceil() as isize;
            let mut raw = Vec::new();
            for i in lo..=hi {
                let w = lanczos2((i as f64 - center) / f);
                if w != 0.0 {
                    raw.push((i, w));
                }
            }
            let total: f64 = raw.iter().map(|(_, w)| w).sum();
            let mut row = Vec::with_capacity(raw.len());
            for (i, w) in raw {
                push_tap(&mut row, reflect_index(i, n), w / total);
            }
            row
        })
        .collect();
    Ok(AxisMap { input_len: n, taps })
}

/// Catmull-Rom interpolation of `n` samples up by `factor` (half-pixel
/// centers, edge samples replicated).
pub fn bicubic_upsample_axis(n: usize, factor: usize) -> AxisMap {
    let f = factor as f64;
    let taps = (0..n * factor)
        .map(|o| {
            let src = (o as f64 + 0.5) / f - 0.5;
            let base = src.floor() as isize;
            let t = src - base as f64;
            let mut row = Vec::with_capacity(4);
            for k in -1..=2isize {
                let w = catmull_rom(t - k as f64);
                if w != 0.0 {
                    let idx = (base + k).clamp(0, n as isize - 1) as usize;
                    push_tap(&mut row, idx, w);
                }
            }
            row
        })
        .collect();
    AxisMap { input_len: n, taps }
}

/// Block replication of `n` samples by `factor`.
pub fn nearest_upsample_axis(n: usize, factor: usize) -> AxisMap {
    AxisMap { input_len: n, taps: (0..n * factor).map(|o| vec![(o / factor, 1.0)]).collect() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Nearest,
    Bicubic,
}

impl std::str::FromStr for BaselineMethod {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(CoreError::UnknownMethod(other.into())),
        }
    }
}

/// Interpolate every band independently to `beta` times the size.
pub fn baseline_upsample(y: &HsiCube, beta: usize, method: BaselineMethod) -> Result<HsiCube> {
    if beta == 0 {
        return Err(CoreError::invalid("beta must be positive"));
    }
    let (_, h, w) = y.dim();
    let (rows, cols) = match method {
        BaselineMethod::Nearest => (nearest_upsample_axis(h, beta), nearest_upsample_axis(w, beta)),
        BaselineMethod::Bicubic => (bicubic_upsample_axis(h, beta), bicubic_upsample_axis(w, beta)),
    };
    let out = resample_forward(&y.to_tensor::<f64>(), &rows, &cols);
    HsiCube::from_tensor(&out)
}
