//! Error maps and RGB composites.

use std::path::{Path, PathBuf};

use hsfuse_core::container::write_cube;
use hsfuse_core::{CoreError, HsiCube};
use ndarray::Array3;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{GrayImage, Rgb, RgbImage};

use crate::error::{PipelineError, Result};

/// Per-pixel mean absolute difference across bands, `h x w` row-major.
pub fn error_map(x: &HsiCube, reference: &HsiCube) -> Result<Vec<f32>> {
    if x.dim() != reference.dim() {
        let (a, b) = (x.dim(), reference.dim());
        let axis = if a.0 != b.0 { ("bands", b.0, a.0) } else if a.1 != b.1 { ("height", b.1, a.1) } else { ("width", b.2, a.2) };
        return Err(CoreError::mismatch(axis.0, axis.1, axis.2).into());
    }
    let (l, h, w) = x.dim();
    let (xd, rd) = (x.data(), reference.data());
    let mut out = vec![0f32; h * w];
    for i in 0..h {
        for j in 0..w {
            let s: f64 = (0..l).map(|b| (xd[[b, i, j]] as f64 - rd[[b, i, j]] as f64).abs()).sum();
            out[i * w + j] = (s / l as f64) as f32;
        }
    }
    Ok(out)
}

/// Min-max stretch to 0..=255; a flat input maps to `flat`.
fn stretch(v: &[f32], flat: u8) -> Vec<u8> {
    let (lo, hi) = v.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    if !(hi > lo) {
        return vec![flat; v.len()];
    }
    v.iter().map(|&p| ((p - lo) / (hi - lo) * 255.0).round() as u8).collect()
}

type Sink<'a> = std::io::BufWriter<&'a mut std::fs::File>;

fn save(path: &Path, write: impl FnOnce(PnmEncoder<&mut Sink<'_>>) -> image::ImageResult<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = std::io::BufWriter::new(&mut file);
    write(PnmEncoder::new(&mut out)).map_err(|e| PipelineError::Image { path: path.into(), reason: e.to_string() })
}

/// Writes `<stem>.pgm` (8-bit, min-max normalized) and `<stem>_map/`, a
/// one-band cube container holding the raw float map. Returns both paths.
pub fn emit_error_map(x: &HsiCube, reference: &HsiCube, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let map = error_map(x, reference)?;
    let (_, h, w) = x.dim();
    let pgm = stem.with_extension("pgm");
    let img = GrayImage::from_raw(w as u32, h as u32, stretch(&map, 0)).expect("buffer size");
    save(&pgm, |e| img.write_with_encoder(e.with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))))?;
    let raw_dir = PathBuf::from(format!("{}_map", stem.display()));
    let hi = map.iter().copied().fold(1.0f32, f32::max);
    let cube = HsiCube::with_range(ndarray_from(h, w, map), [0.0, hi])?;
    write_cube(&cube, &raw_dir, "error-map")?;
    Ok((pgm, raw_dir))
}

fn ndarray_from(h: usize, w: usize, v: Vec<f32>) -> Array3<f32> {
    Array3::from_shape_vec((1, h, w), v).expect("shape")
}

/// 8-bit composite with `bands = (b, g, r)`; each channel stretched on its own.
pub fn rgb_composite(x: &HsiCube, bands: [usize; 3]) -> Result<RgbImage> {
    let l = x.bands();
    if let Some(&bad) = bands.iter().find(|&&b| b >= l) {
        return Err(CoreError::invalid(format!("composite band {bad} out of range for {l} bands")).into());
    }
    let (_, h, w) = x.dim();
    let chan = |b: usize| stretch(&x.band(b).iter().copied().collect::<Vec<_>>(), 128);
    let (bl, gr, rd) = (chan(bands[0]), chan(bands[1]), chan(bands[2]));
    Ok(RgbImage::from_fn(w as u32, h as u32, |c, r| {
        let k = r as usize * w + c as usize;
        Rgb([rd[k], gr[k], bl[k]])
    }))
}

pub fn emit_rgb(x: &HsiCube, bands: [usize; 3], path: &Path) -> Result<PathBuf> {
    let img = rgb_composite(x, bands)?;
    let path = path.with_extension("ppm");
    save(&path, |e| img.write_with_encoder(e.with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))))?;
    Ok(path)
}

/// First, middle and last band when no triple is configured.
pub fn default_rgb_bands(bands: usize) -> [usize; 3] {
    [0, bands / 2, bands.saturating_sub(1)]
}
