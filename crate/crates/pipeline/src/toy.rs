//! Synthetic scenes: smooth background, Gaussian blobs and sharp rectangles,
//! each object carrying its own spectrum.

use hsfuse_core::{HsiCube, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ToyConfig;

struct Blob {
    cy: f64,
    cx: f64,
    sigma: f64,
    spectrum: Vec<f64>,
}

struct Rect {
    r0: usize,
    c0: usize,
    r1: usize,
    c1: usize,
    spectrum: Vec<f64>,
}

fn spectrum(rng: &mut ChaCha8Rng, bands: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..bands).map(|_| rng.gen_range(lo..hi)).collect()
}

/// One `bands x size x size` tile.
pub fn toy_tile(rng: &mut ChaCha8Rng, bands: usize, size: usize) -> Result<HsiCube> {
    let n = size as f64;
    let base = spectrum(rng, bands, 0.05, 0.2);
    let tilt = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let blobs: Vec<Blob> = (0..3)
        .map(|_| Blob {
            cy: rng.gen_range(0.0..n),
            cx: rng.gen_range(0.0..n),
            sigma: rng.gen_range(0.06..0.18) * n,
            spectrum: spectrum(rng, bands, 0.1, 0.5),
        })
        .collect();
    let rects: Vec<Rect> = (0..3)
        .map(|_| {
            let (h, w) = (rng.gen_range(size / 8..=size / 2).max(1), rng.gen_range(size / 8..=size / 2).max(1));
            let (r0, c0) = (rng.gen_range(0..=size - h), rng.gen_range(0..=size - w));
            Rect { r0, c0, r1: r0 + h, c1: c0 + w, spectrum: spectrum(rng, bands, 0.1, 0.45) }
        })
        .collect();
    HsiCube::from_fn((bands, size, size), |(b, r, c)| {
        let (y, x) = (r as f64, c as f64);
        let mut v = base[b] * (1.0 + 0.3 * (tilt.0 * y + tilt.1 * x) / n);
        for bl in &blobs {
            let d2 = (y - bl.cy).powi(2) + (x - bl.cx).powi(2);
            v += bl.spectrum[b] * (-d2 / (2.0 * bl.sigma * bl.sigma)).exp();
        }
        for rc in &rects {
            if (rc.r0..rc.r1).contains(&r) && (rc.c0..rc.c1).contains(&c) {
                v += rc.spectrum[b];
            }
        }
        v.clamp(0.0, 1.0) as f32
    })
}

/// `count` tiles laid out left to right: `bands x size x (size * count)`.
pub fn toy_scene(cfg: &ToyConfig) -> Result<HsiCube> {
    if cfg.count == 0 || cfg.bands == 0 || cfg.size < 8 {
        return Err(hsfuse_core::CoreError::invalid("toy scene needs count >= 1, bands >= 1 and size >= 8"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tiles: Vec<HsiCube> = (0..cfg.count).map(|_| toy_tile(&mut rng, cfg.bands, cfg.size)).collect::<Result<_>>()?;
    let s = cfg.size;
    HsiCube::from_fn((cfg.bands, s, s * cfg.count), |(b, r, c)| tiles[c / s].data()[[b, r, c % s]])
}
