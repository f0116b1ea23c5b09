//! Reduced-resolution synthesis: Gaussian blur + decimation for the
//! low-resolution cube, band averaging for the PAN image, scene tiling.

use hsfuse_nn::{par, reflect_index, AxisMap};
use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::datamodel::{validate_sample, FusionSample, HsiCube, PanImage};
use crate::error::{CoreError, Result};

/// Blur width per unit of scale factor.
pub const SIGMA_PER_BETA: f64 = 0.4247;
pub const DEFAULT_KERNEL_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Reflect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    pub beta: usize,
    pub kernel_size: usize,
    pub sigma: f64,
    pub pan_band_count: usize,
    pub boundary: Boundary,
}

impl DegradeSpec {
    pub fn new(beta: usize, pan_band_count: usize) -> Self {
        Self {
            beta,
            kernel_size: DEFAULT_KERNEL_SIZE,
            sigma: SIGMA_PER_BETA * beta as f64,
            pan_band_count,
            boundary: Boundary::Reflect,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_kernel_size(mut self, size: usize) -> Self {
        self.kernel_size = size;
        self
    }

    pub fn check(&self, bands: usize) -> Result<()> {
        if self.beta == 0 {
            return Err(CoreError::invalid("beta must be positive"));
        }
        if self.kernel_size == 0 || !(self.sigma > 0.0) {
            return Err(CoreError::invalid(format!(
                "kernel size {} and sigma {} must be positive",
                self.kernel_size, self.sigma
            )));
        }
        if self.pan_band_count == 0 || self.pan_band_count > bands {
            return Err(CoreError::invalid(format!(
                "PAN band count {} outside 1..={bands}",
                self.pan_band_count
            )));
        }
        Ok(())
    }
}

/// Offset of tap 0 relative to the output pixel. Even kernels put the extra
/// tap on the positive side, so tap `i` reads input `r + i - (size - 1) / 2`.
pub fn tap_origin(size: usize) -> isize {
    -(((size - 1) / 2) as isize)
}

/// Normalized 1-d Gaussian samples on a grid centered between the middle
/// taps for even sizes (on the middle tap for odd sizes).
pub fn gaussian_1d(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || !(sigma > 0.0) {
        return Err(CoreError::invalid(format!("gaussian kernel needs size >= 1 and sigma > 0, got {size}, {sigma}")));
    }
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Isotropic 2-d Gaussian kernel, normalized to unit sum.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Array2<f64>> {
    if size == 0 || !(sigma > 0.0) {
        return Err(CoreError::invalid(format!("gaussian kernel needs size >= 1 and sigma > 0, got {size}, {sigma}")));
    }
    let center = (size as f64 - 1.0) / 2.0;
    let raw = Array2::from_shape_fn((size, size), |(i, j)| {
        let d2 = (i as f64 - center).powi(2) + (j as f64 - center).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp()
    });
    let total = raw.sum();
    Ok(raw / total)
}

/// Blur each band with the spec's Gaussian (reflect padding) and keep every
/// `beta`-th pixel starting at offset 0.
pub fn blur_downsample(reference: &HsiCube, spec: &DegradeSpec) -> Result<HsiCube> {
    if spec.beta == 0 {
        return Err(CoreError::invalid("beta must be positive"));
    }
    let (l, h, w) = reference.dim();
    if h % spec.beta != 0 {
        return Err(CoreError::invalid(format!("height {h} not divisible by beta {}", spec.beta)));
    }
    if w % spec.beta != 0 {
        return Err(CoreError::invalid(format!("width {w} not divisible by beta {}", spec.beta)));
    }
    let kernel = gaussian_kernel(spec.kernel_size, spec.sigma)?;
    let k = spec.kernel_size;
    let origin = tap_origin(k);
    let (ho, wo) = (h / spec.beta, w / spec.beta);
    let mut out = vec![0f32; l * ho * wo];
    let data = reference.data();
    par::for_each_chunk_mut(&mut out, ho * wo, |b, plane| {
        let band = data.index_axis(Axis(0), b);
        for i in 0..ho {
            for j in 0..wo {
                let (r, c) = ((i * spec.beta) as isize, (j * spec.beta) as isize);
                let mut acc = 0.0f64;
                for ki in 0..k {
                    let rr = reflect_index(r + origin + ki as isize, h);
                    for kj in 0..k {
                        let cc = reflect_index(c + origin + kj as isize, w);
                        acc += kernel[[ki, kj]] * band[[rr, cc]] as f64;
                    }
                }
                plane[i * wo + j] = acc as f32;
            }
        }
    });
    HsiCube::with_range(Array3::from_shape_vec((l, ho, wo), out).expect("size"), reference.value_range())
}

/// Separable form of [`blur_downsample`] along one axis of length `n`, as a
/// linear map usable inside the autograd graph.
pub fn blur_decimate_axis(n: usize, spec: &DegradeSpec) -> Result<AxisMap> {
    let g = gaussian_1d(spec.kernel_size, spec.sigma)?;
    if spec.beta == 0 || n % spec.beta != 0 {
        return Err(CoreError::invalid(format!("length {n} not divisible by beta {}", spec.beta)));
    }
    let origin = tap_origin(spec.kernel_size);
    let taps = (0..n / spec.beta)
        .map(|o| {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(g.len());
            for (t, &wt) in g.iter().enumerate() {
                let idx = reflect_index((o * spec.beta) as isize + origin + t as isize, n);
                match row.iter_mut().find(|(i, _)| *i == idx) {
                    Some(e) => e.1 += wt,
                    None => row.push((idx, wt)),
                }
            }
            row
        })
        .collect();
    Ok(AxisMap { input_len: n, taps })
}

/// Pixelwise mean of bands `0..pan_band_count`.
pub fn synthesize_pan(reference: &HsiCube, pan_band_count: usize) -> Result<PanImage> {
    if pan_band_count == 0 || pan_band_count > reference.bands() {
        return Err(CoreError::invalid(format!(
            "PAN band count {pan_band_count} outside 1..={}",
            reference.bands()
        )));
    }
    let (_, h, w) = reference.dim();
    let mut acc = Array2::<f64>::zeros((h, w));
    for b in 0..pan_band_count {
        acc.zip_mut_with(&reference.band(b), |a, &v| *a += v as f64);
    }
    PanImage::new(acc.mapv(|v| (v / pan_band_count as f64) as f32))
}

/// Non-overlapping `patch x patch` tiles in row-major order.
pub fn partition_patches(scene: &HsiCube, patch: usize) -> Result<Vec<HsiCube>> {
    let (_, h, w) = scene.dim();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(CoreError::invalid(format!("scene {h}x{w} not divisible into {patch}x{patch} patches")));
    }
    let mut out = Vec::with_capacity((h / patch) * (w / patch));
    for r in (0..h).step_by(patch) {
        for c in (0..w).step_by(patch) {
            out.push(scene.crop(r, c, patch, patch)?);
        }
    }
    Ok(out)
}

/// Reference cube -> validated (LR-HSI, PAN, reference) triple.
pub fn make_sample(reference: &HsiCube, spec: &DegradeSpec, patch_id: &str, dataset_name: &str) -> Result<FusionSample> {
    spec.check(reference.bands())?;
    let sample = FusionSample {
        lr_hsi: blur_downsample(reference, spec)?,
        pan: synthesize_pan(reference, spec.pan_band_count)?,
        reference: Some(reference.clone()),
        beta: spec.beta,
        patch_id: patch_id.into(),
        dataset_name: dataset_name.into(),
    };
    validate_sample(&sample)?;
    Ok(sample)
}

/// Divide by the global maximum so values land in `[0, 1]`.
pub fn normalize_by_max(cube: &HsiCube) -> Result<(HsiCube, f32)> {
    let max = cube.data().iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    if !(max > 0.0) {
        return Err(CoreError::invalid(format!("cannot normalize a cube with maximum {max}")));
    }
    Ok((HsiCube::new(cube.data().mapv(|v| v / max))?, max))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct pointwise Gaussian, independent of the kernel builder.
    fn gauss(dx: f64, dy: f64, sigma: f64) -> f64 {
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    }

    #[test]
    fn kernel_sums_to_one_and_is_point_symmetric() {
        let k = gaussian_kernel(8, SIGMA_PER_BETA * 4.0).unwrap();
        assert_eq!(k.dim(), (8, 8));
        assert!((k.sum() - 1.0).abs() < 1e-12);
        for i in 0..8 {
            for j in 0..8 {
                assert!((k[[i, j]] - k[[7 - i, 7 - j]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_tap_kernel() {
        let k = gaussian_kernel(1, 3.7).unwrap();
        assert_eq!(k, Array2::from_elem((1, 1), 1.0));
    }

    #[test]
    fn size3_center_corner_ratio() {
        let k = gaussian_kernel(3, 1.0).unwrap();
        let want = gauss(0.0, 0.0, 1.0) / gauss(1.0, 1.0, 1.0);
        assert!((k[[1, 1]] / k[[0, 0]] - want).abs() < 1e-12);
    }

    #[test]
    fn bad_kernel_parameters() {
        assert!(gaussian_kernel(0, 1.0).is_err());
        assert!(gaussian_kernel(3, 0.0).is_err());
        assert!(gaussian_kernel(3, -1.0).is_err());
    }

    #[test]
    fn sigma_follows_beta() {
        for beta in 1..9 {
            let s = DegradeSpec::new(beta, 1);
            assert!((s.sigma - 0.4247 * beta as f64).abs() < 1e-9);
        }
        assert!((DegradeSpec::new(4, 61).sigma - 1.6988).abs() < 1e-9);
    }

    #[test]
    fn pavia_dims_and_dc_preservation() {
        let cube = HsiCube::filled((102, 160, 160), 0.37).unwrap();
        let lr = blur_downsample(&cube, &DegradeSpec::new(4, 61)).unwrap();
        assert_eq!(lr.dim(), (102, 40, 40));
        assert!(lr.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn non_divisible_dims_rejected() {
        let cube = HsiCube::filled((1, 10, 12), 0.0).unwrap();
        assert!(blur_downsample(&cube, &DegradeSpec::new(4, 1)).is_err());
        assert!(partition_patches(&cube, 4).is_err());
    }

    #[test]
    fn separable_map_agrees_with_direct_blur() {
        let cube = HsiCube::from_fn((2, 12, 8), |(b, r, c)| ((b * 31 + r * 7 + c * 3) % 17) as f32 / 17.0).unwrap();
        let spec = DegradeSpec::new(2, 1);
        let direct = blur_downsample(&cube, &spec).unwrap();
        let rows = blur_decimate_axis(12, &spec).unwrap();
        let cols = blur_decimate_axis(8, &spec).unwrap();
        let sep = hsfuse_nn::resample_forward(&cube.to_tensor::<f64>(), &rows, &cols);
        for (a, b) in direct.data().iter().zip(sep.data()) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn pan_synthesis_cases() {
        let cube = HsiCube::from_fn((3, 2, 2), |(b, _, _)| b as f32).unwrap();
        let pan = synthesize_pan(&cube, 3).unwrap();
        assert!(pan.data().iter().all(|&v| v == 1.0));
        let pan1 = synthesize_pan(&cube, 1).unwrap();
        assert_eq!(pan1.data(), &cube.band(0).to_owned());
        assert!(synthesize_pan(&cube, 4).is_err());
        assert!(synthesize_pan(&cube, 0).is_err());
    }

    #[test]
    fn pan_is_mean_of_first_k_bands() {
        let cube = HsiCube::from_fn((102, 4, 4), |(b, r, c)| (b as f32 * 0.01 + r as f32 * 0.1 + c as f32) / 10.0).unwrap();
        let pan = synthesize_pan(&cube, 61).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want: f64 = (0..61).map(|b| cube.data()[[b, r, c]] as f64).sum::<f64>() / 61.0;
                assert!((pan.data()[[r, c]] as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn patch_tiling() {
        let scene = HsiCube::filled((2, 960, 640), 0.1).unwrap();
        let patches = partition_patches(&scene, 160).unwrap();
        assert_eq!(patches.len(), 24);
        assert!(patches.iter().all(|p| p.dim() == (2, 160, 160)));

        let one = HsiCube::from_fn((1, 4, 4), |(_, r, c)| (r * 4 + c) as f32).unwrap();
        assert_eq!(partition_patches(&one, 4).unwrap(), vec![one.clone()]);
        let tiles = partition_patches(&one, 2).unwrap();
        assert_eq!(tiles.len(), 4);
        // reassemble row-major and compare
        let mut re = Array3::<f32>::zeros((1, 4, 4));
        for (t, tile) in tiles.iter().enumerate() {
            let (tr, tc) = (t / 2 * 2, t % 2 * 2);
            for r in 0..2 {
                for c in 0..2 {
                    re[[0, tr + r, tc + c]] = tile.data()[[0, r, c]];
                }
            }
        }
        assert_eq!(&re, one.data());
    }

    #[test]
    fn samples_for_each_dataset_layout() {
        let bots = HsiCube::filled((145, 120, 120), 0.2).unwrap();
        let s = make_sample(&bots, &DegradeSpec::new(3, 31), "b0", "botswana").unwrap();
        assert_eq!(s.lr_hsi.dim(), (145, 40, 40));
        assert_eq!((s.pan.height(), s.pan.width()), (120, 120));

        let chik = HsiCube::filled((128, 256, 256), 0.2).unwrap();
        let s = make_sample(&chik, &DegradeSpec::new(4, 65), "c0", "chikusei").unwrap();
        assert_eq!(s.lr_hsi.dim(), (128, 64, 64));
        assert_eq!((s.pan.height(), s.pan.width()), (256, 256));

        let small = HsiCube::from_fn((3, 5, 7), |(b, r, c)| (b + r + c) as f32 / 15.0).unwrap();
        let s = make_sample(&small, &DegradeSpec::new(1, 3), "x", "toy").unwrap();
        assert_eq!(s.lr_hsi.dim(), (3, 5, 7));
        validate_sample(&s).unwrap();
    }
}
