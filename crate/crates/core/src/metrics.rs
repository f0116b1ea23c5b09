//! Reference-based fusion quality measures. All accumulation is in f64.

use serde::{Deserialize, Serialize};

use crate::datamodel::HsiCube;
use crate::error::{CoreError, Result};

fn check_dims(x: &HsiCube, reference: &HsiCube) -> Result<()> {
    let (a, b) = (x.dim(), reference.dim());
    for (axis, p, q) in [("bands", a.0, b.0), ("height", a.1, b.1), ("width", a.2, b.2)] {
        if p != q {
            return Err(CoreError::mismatch(axis, q, p));
        }
    }
    Ok(())
}

/// Pearson correlation of one band pair; `None` when `b` is constant.
/// A constant `a` against a varying `b` correlates at 0.
fn band_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&p, &q) in a.iter().zip(b) {
        cov += (p - ma) * (q - mb);
        va += (p - ma) * (p - ma);
        vb += (q - mb) * (q - mb);
    }
    if vb == 0.0 {
        return None;
    }
    if va == 0.0 {
        return Some(0.0);
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

fn bands_f64(cube: &HsiCube) -> Vec<Vec<f64>> {
    (0..cube.bands()).map(|b| cube.band(b).iter().map(|&v| v as f64).collect()).collect()
}

/// Per-band correlations.
pub fn cc_per_band(x: &HsiCube, reference: &HsiCube) -> Result<Vec<f64>> {
    check_dims(x, reference)?;
    let (xb, rb) = (bands_f64(x), bands_f64(reference));
    xb.iter()
        .zip(&rb)
        .enumerate()
        .map(|(i, (a, b))| band_correlation(a, b).ok_or(CoreError::ConstantBand { band: i }))
        .collect()
}

/// Mean per-band correlation coefficient.
pub fn cc(x: &HsiCube, reference: &HsiCube) -> Result<f64> {
    let per = cc_per_band(x, reference)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Spectral angle summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamResult {
    pub mean_deg: f64,
    /// Pixels where either spectrum has zero norm (excluded from the mean).
    pub skipped: usize,
}

pub fn sam_detailed(x: &HsiCube, reference: &HsiCube) -> Result<SamResult> {
    check_dims(x, reference)?;
    let (l, h, w) = x.dim();
    let (xd, rd) = (x.data(), reference.data());
    let mut total = 0.0;
    let mut used = 0usize;
    for r in 0..h {
        for c in 0..w {
            let (mut na, mut nb) = (0.0f64, 0.0f64);
            for b in 0..l {
                let (p, q) = (xd[[b, r, c]] as f64, rd[[b, r, c]] as f64);
                na += p * p;
                nb += q * q;
            }
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            // 2 atan2(|u - v|, |u + v|) on unit vectors; stays accurate near 0 and pi
            let (na, nb) = (na.sqrt(), nb.sqrt());
            let (mut diff, mut sum) = (0.0f64, 0.0f64);
            for b in 0..l {
                let (u, v) = (xd[[b, r, c]] as f64 / na, rd[[b, r, c]] as f64 / nb);
                diff += (u - v) * (u - v);
                sum += (u + v) * (u + v);
            }
            total += 2.0 * diff.sqrt().atan2(sum.sqrt());
            used += 1;
        }
    }
    if used == 0 {
        return Err(CoreError::AllZeroSpectra);
    }
    Ok(SamResult { mean_deg: (total / used as f64).to_degrees(), skipped: h * w - used })
}

/// Mean spectral angle in degrees.
pub fn sam(x: &HsiCube, reference: &HsiCube) -> Result<f64> {
    sam_detailed(x, reference).map(|s| s.mean_deg)
}

fn squared_error_sums(x: &HsiCube, reference: &HsiCube) -> Result<Vec<f64>> {
    check_dims(x, reference)?;
    Ok((0..x.bands())
        .map(|b| {
            x.band(b)
                .iter()
                .zip(reference.band(b).iter())
                .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
                .sum()
        })
        .collect())
}

/// Root of the mean squared error over all bands and pixels.
pub fn rmse(x: &HsiCube, reference: &HsiCube) -> Result<f64> {
    let sse: f64 = squared_error_sums(x, reference)?.iter().sum();
    Ok((sse / x.data().len() as f64).sqrt())
}

/// Per-band RMSE: `||x_i - ref_i||_F / sqrt(n)`.
pub fn rmse_per_band(x: &HsiCube, reference: &HsiCube) -> Result<Vec<f64>> {
    let n = (x.height() * x.width()) as f64;
    Ok(squared_error_sums(x, reference)?.into_iter().map(|s| (s / n).sqrt()).collect())
}

/// Reconstruction SNR in dB; `+inf` for identical cubes.
pub fn rsnr(x: &HsiCube, reference: &HsiCube) -> Result<f64> {
    let sse: f64 = squared_error_sums(x, reference)?.iter().sum();
    let energy: f64 = reference.data().iter().map(|&v| (v as f64).powi(2)).sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (energy / sse).log10())
}

/// Resolution factor applied in ERGAS.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErgasForm {
    /// `100 / beta`, the customary form.
    #[default]
    Canonical,
    /// `100 / d^2` with `d = 1 / beta` (PAN over HS linear resolution).
    AsPrinted,
}

pub fn ergas_with(x: &HsiCube, reference: &HsiCube, beta: usize, form: ErgasForm) -> Result<f64> {
    if beta == 0 {
        return Err(CoreError::invalid("beta must be positive"));
    }
    let per = rmse_per_band(x, reference)?;
    let n = (x.height() * x.width()) as f64;
    let mut acc = 0.0;
    for (i, r) in per.iter().enumerate() {
        let mu = reference.band(i).iter().map(|&v| v as f64).sum::<f64>() / n;
        if mu == 0.0 {
            return Err(CoreError::ZeroMeanBand { band: i });
        }
        acc += (r / mu).powi(2);
    }
    let factor = match form {
        ErgasForm::Canonical => 1.0 / beta as f64,
        ErgasForm::AsPrinted => {
            let d = 1.0 / beta as f64;
            1.0 / (d * d)
        }
    };
    Ok(100.0 * factor * (acc / per.len() as f64).sqrt())
}

pub fn ergas(x: &HsiCube, reference: &HsiCube, beta: usize) -> Result<f64> {
    ergas_with(x, reference, beta, ErgasForm::Canonical)
}

/// Per-band PSNR in dB; `+inf` where the band matches exactly.
pub fn psnr_per_band(x: &HsiCube, reference: &HsiCube) -> Result<Vec<f64>> {
    let per = rmse_per_band(x, reference)?;
    per.iter()
        .enumerate()
        .map(|(i, &r)| {
            let peak = reference.band(i).iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
            if peak == 0.0 {
                return Err(CoreError::ZeroMaxBand { band: i });
            }
            if r == 0.0 {
                return Ok(f64::INFINITY);
            }
            Ok(10.0 * (peak / r).powi(2).log10())
        })
        .collect()
}

/// Mean PSNR over bands with nonzero error; `+inf` when every band matches.
pub fn psnr(x: &HsiCube, reference: &HsiCube) -> Result<f64> {
    let per = psnr_per_band(x, reference)?;
    Ok(mean_finite(&per))
}

fn mean_finite(v: &[f64]) -> f64 {
    let finite: Vec<f64> = v.iter().copied().filter(|p| p.is_finite()).collect();
    if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// JSON has no infinities; they are written as the strings "inf"/"-inf".
pub mod sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn to_repr(v: f64) -> serde_json::Value {
        if v.is_finite() {
            serde_json::json!(v)
        } else if v.is_nan() {
            serde_json::json!("nan")
        } else if v > 0.0 {
            serde_json::json!("inf")
        } else {
            serde_json::json!("-inf")
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float sentinel {other}"))),
            },
        }
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| to_repr(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            #[derive(Deserialize)]
            struct W(#[serde(with = "super")] f64);
            Ok(Vec::<W>::deserialize(d)?.into_iter().map(|w| w.0).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerBand {
    pub cc: Vec<f64>,
    pub rmse: Vec<f64>,
    #[serde(with = "sentinel::vec")]
    pub psnr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cc: f64,
    pub sam_deg: f64,
    pub rmse: f64,
    #[serde(with = "sentinel")]
    pub rsnr_db: f64,
    pub ergas: f64,
    #[serde(with = "sentinel")]
    pub psnr_db: f64,
    pub n_pixels: usize,
    pub n_bands: usize,
    pub sam_skipped_pixels: usize,
    /// Bands whose PSNR is infinite and therefore left out of the mean.
    pub psnr_excluded_bands: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_band: Option<PerBand>,
}

/// All six measures for one (fused, reference) pair.
pub fn evaluate(x: &HsiCube, reference: &HsiCube, beta: usize, form: ErgasForm) -> Result<MetricReport> {
    check_dims(x, reference)?;
    let cc_b = cc_per_band(x, reference)?;
    let sam_r = sam_detailed(x, reference)?;
    let rmse_b = rmse_per_band(x, reference)?;
    let psnr_b = psnr_per_band(x, reference)?;
    Ok(MetricReport {
        cc: cc_b.iter().sum::<f64>() / cc_b.len() as f64,
        sam_deg: sam_r.mean_deg,
        rmse: rmse(x, reference)?,
        rsnr_db: rsnr(x, reference)?,
        ergas: ergas_with(x, reference, beta, form)?,
        psnr_db: mean_finite(&psnr_b),
        n_pixels: x.height() * x.width(),
        n_bands: x.bands(),
        sam_skipped_pixels: sam_r.skipped,
        psnr_excluded_bands: psnr_b.iter().enumerate().filter(|(_, p)| !p.is_finite()).map(|(i, _)| i).collect(),
        per_band: Some(PerBand { cc: cc_b, rmse: rmse_b, psnr: psnr_b }),
    })
}
