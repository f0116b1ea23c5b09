//! Cube and image types shared by every stage.

use hsfuse_nn::{Real, Tensor};
use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use crate::error::{CoreError, Result};

/// Hyperspectral cube indexed `(band, row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    data: Array3<f32>,
    value_range: [f32; 2],
}

fn first_non_finite<'a>(it: impl Iterator<Item = (Vec<usize>, &'a f32)>) -> Option<Vec<usize>> {
    it.into_iter().find(|(_, v)| !v.is_finite()).map(|(i, _)| i)
}

impl HsiCube {
    /// Validated constructor with the default `[0, 1]` value range.
    pub fn new(data: Array3<f32>) -> Result<Self> {
        Self::with_range(data, [0.0, 1.0])
    }

    pub fn with_range(data: Array3<f32>, value_range: [f32; 2]) -> Result<Self> {
        let (l, h, w) = data.dim();
        for (axis, n) in [("bands", l), ("height", h), ("width", w)] {
            if n == 0 {
                return Err(CoreError::invalid(format!("cube {axis} must be at least 1")));
            }
        }
        if let Some(index) = first_non_finite(data.indexed_iter().map(|((b, r, c), v)| (vec![b, r, c], v))) {
            return Err(CoreError::NonFinite { what: "cube".into(), index });
        }
        if !(value_range[0].is_finite() && value_range[1].is_finite() && value_range[0] <= value_range[1]) {
            return Err(CoreError::invalid(format!("bad value range {value_range:?}")));
        }
        Ok(Self { data, value_range })
    }

    pub fn from_fn(shape: (usize, usize, usize), f: impl FnMut((usize, usize, usize)) -> f32) -> Result<Self> {
        Self::new(Array3::from_shape_fn(shape, f))
    }

    pub fn filled(shape: (usize, usize, usize), v: f32) -> Result<Self> {
        Self::new(Array3::from_elem(shape, v))
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn bands(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn value_range(&self) -> [f32; 2] {
        self.value_range
    }

    pub fn band(&self, i: usize) -> ArrayView2<'_, f32> {
        self.data.index_axis(Axis(0), i)
    }

    /// Elementwise clamp into the declared value range.
    pub fn clamped(&self) -> Self {
        let [lo, hi] = self.value_range;
        Self { data: self.data.mapv(|v| v.clamp(lo, hi)), value_range: self.value_range }
    }

    /// Sub-cube of rows `r0..r0+h`, cols `c0..c0+w`.
    pub fn crop(&self, r0: usize, c0: usize, h: usize, w: usize) -> Result<Self> {
        if r0 + h > self.height() || c0 + w > self.width() || h == 0 || w == 0 {
            return Err(CoreError::invalid(format!(
                "crop {h}x{w} at ({r0},{c0}) outside {}x{}",
                self.height(),
                self.width()
            )));
        }
        Ok(Self {
            data: self.data.slice(s![.., r0..r0 + h, c0..c0 + w]).to_owned(),
            value_range: self.value_range,
        })
    }

    /// `[1, bands, h, w]` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let (l, h, w) = self.dim();
        Tensor::from_vec(&[1, l, h, w], self.data.iter().map(|&v| T::of(v as f64)).collect())
    }

    /// Build from the first sample of an NCHW tensor.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (_, l, h, w) = t.dims4();
        let data: Vec<f32> = t.data()[..l * h * w].iter().map(|v| v.f64() as f32).collect();
        Self::new(Array3::from_shape_vec((l, h, w), data).expect("tensor size"))
    }
}

/// Single-band image at the high spatial resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct PanImage {
    data: Array2<f32>,
}

impl PanImage {
    pub fn new(data: Array2<f32>) -> Result<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(CoreError::invalid("PAN image must be at least 1x1"));
        }
        if let Some(index) = first_non_finite(data.indexed_iter().map(|((r, c), v)| (vec![r, c], v))) {
            return Err(CoreError::NonFinite { what: "PAN image".into(), index });
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    /// `[1, 1, h, w]` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let (h, w) = self.data.dim();
        Tensor::from_vec(&[1, 1, h, w], self.data.iter().map(|&v| T::of(v as f64)).collect())
    }

    /// View as a one-band cube (for the container format).
    pub fn as_cube(&self) -> HsiCube {
        let (h, w) = self.data.dim();
        HsiCube {
            data: self.data.clone().into_shape_with_order((1, h, w)).expect("same size"),
            value_range: [0.0, 1.0],
        }
    }

    pub fn from_cube(cube: &HsiCube) -> Result<Self> {
        if cube.bands() != 1 {
            return Err(CoreError::mismatch("PAN bands", 1, cube.bands()));
        }
        Self::new(cube.band(0).to_owned())
    }
}

/// One reduced-resolution triple plus its scale factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionSample {
    pub lr_hsi: HsiCube,
    pub pan: PanImage,
    pub reference: Option<HsiCube>,
    pub beta: usize,
    pub patch_id: String,
    pub dataset_name: String,
}

impl FusionSample {
    /// High-resolution `(height, width)`.
    pub fn hr_dims(&self) -> (usize, usize) {
        (self.pan.height(), self.pan.width())
    }
}

/// Check every shape relation of a [`FusionSample`].
pub fn validate_sample(sample: &FusionSample) -> Result<()> {
    let beta = sample.beta;
    if beta == 0 {
        return Err(CoreError::invalid("beta must be a positive integer"));
    }
    let (l, h, w) = sample.lr_hsi.dim();
    if sample.pan.height() != beta * h {
        return Err(CoreError::mismatch("pan height", beta * h, sample.pan.height()));
    }
    if sample.pan.width() != beta * w {
        return Err(CoreError::mismatch("pan width", beta * w, sample.pan.width()));
    }
    if let Some(r) = &sample.reference {
        if r.bands() != l {
            return Err(CoreError::mismatch("reference bands", l, r.bands()));
        }
        if r.height() != beta * h {
            return Err(CoreError::mismatch("reference height", beta * h, r.height()));
        }
        if r.width() != beta * w {
            return Err(CoreError::mismatch("reference width", beta * w, r.width()));
        }
    }
    Ok(())
}
