//! Separable linear resampling: any per-axis sparse weight matrix applied to
//! every plane of an NCHW tensor. Bilinear scaling, windowed-sinc decimation
//! and blur-then-decimate are all instances.

use std::sync::Arc;

use crate::par;
use crate::{Graph, Real, Tensor, Var};

/// Sparse `out x in` matrix along one axis: `taps[o]` lists `(input index, weight)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisMap {
    pub input_len: usize,
    pub taps: Vec<Vec<(usize, f64)>>,
}

impl AxisMap {
    pub fn output_len(&self) -> usize {
        self.taps.len()
    }

    /// Identity on `n` samples.
    pub fn identity(n: usize) -> Self {
        Self { input_len: n, taps: (0..n).map(|i| vec![(i, 1.0)]).collect() }
    }

    /// Bilinear interpolation from `n_in` to `n_out` samples using
    /// half-pixel centers (`align_corners = false`, no antialiasing).
    pub fn bilinear(n_in: usize, n_out: usize) -> Self {
        let scale = n_in as f64 / n_out as f64;
        let taps = (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(n_in - 1);
                let i1 = (i0 + 1).min(n_in - 1);
                let frac = src - i0 as f64;
                if i0 == i1 || frac == 0.0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - frac), (i1, frac)]
                }
            })
            .collect();
        Self { input_len: n_in, taps }
    }

    /// Apply along a strided line: `dst[o] = sum w * src[i]`.
    fn apply_line<T: Real>(&self, src: &[T], stride: usize, dst: &mut [T], dst_stride: usize) {
        for (o, taps) in self.taps.iter().enumerate() {
            let mut acc = T::zero();
            for &(i, w) in taps {
                acc = acc + T::of(w) * src[i * stride];
            }
            dst[o * dst_stride] = acc;
        }
    }

    /// Adjoint along a strided line: `dst[i] += w * src[o]`.
    fn adjoint_line<T: Real>(&self, src: &[T], stride: usize, dst: &mut [T], dst_stride: usize) {
        for (o, taps) in self.taps.iter().enumerate() {
            let g = src[o * stride];
            for &(i, w) in taps {
                dst[i * dst_stride] = dst[i * dst_stride] + T::of(w) * g;
            }
        }
    }
}

/// Apply `rows` then `cols` to each `h x w` plane of `x`.
pub fn resample_forward<T: Real>(x: &Tensor<T>, rows: &AxisMap, cols: &AxisMap) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    assert_eq!(rows.input_len, h, "row map expects {} rows, got {h}", rows.input_len);
    assert_eq!(cols.input_len, w, "column map expects {} cols, got {w}", cols.input_len);
    let (ho, wo) = (rows.output_len(), cols.output_len());
    let mut out = vec![T::zero(); n * c * ho * wo];
    par::for_each_chunk_mut(&mut out, ho * wo, |plane_idx, dst| {
        let src = &x.data()[plane_idx * h * w..(plane_idx + 1) * h * w];
        let mut tmp = vec![T::zero(); h * wo];
        for r in 0..h {
            cols.apply_line(&src[r * w..], 1, &mut tmp[r * wo..], 1);
        }
        for col in 0..wo {
            rows.apply_line(&tmp[col..], wo, &mut dst[col..], wo);
        }
    });
    Tensor::from_vec(&[n, c, ho, wo], out)
}

/// Adjoint of [`resample_forward`].
pub fn resample_adjoint<T: Real>(g: &Tensor<T>, rows: &AxisMap, cols: &AxisMap) -> Tensor<T> {
    let (n, c, ho, wo) = g.dims4();
    let (h, w) = (rows.input_len, cols.input_len);
    let mut out = vec![T::zero(); n * c * h * w];
    par::for_each_chunk_mut(&mut out, h * w, |plane_idx, dst| {
        let src = &g.data()[plane_idx * ho * wo..(plane_idx + 1) * ho * wo];
        let mut tmp = vec![T::zero(); h * wo];
        for col in 0..wo {
            rows.adjoint_line(&src[col..], wo, &mut tmp[col..], wo);
        }
        for r in 0..h {
            cols.adjoint_line(&tmp[r * wo..], 1, &mut dst[r * w..], 1);
        }
    });
    Tensor::from_vec(&[n, c, h, w], out)
}

impl<T: Real> Graph<T> {
    pub fn resample(&mut self, x: Var, rows: Arc<AxisMap>, cols: Arc<AxisMap>) -> Var {
        let out = resample_forward(self.value(x), &rows, &cols);
        self.push(
            out,
            vec![x],
            Box::new(move |_, _, g, _| vec![Some(resample_adjoint(g, &rows, &cols))]),
        )
    }

    /// Bilinear rescale of every plane to `(h, w)`.
    pub fn bilinear_resize(&mut self, x: Var, h: usize, w: usize) -> Var {
        let (_, _, hi, wi) = self.value(x).dims4();
        self.resample(x, Arc::new(AxisMap::bilinear(hi, h)), Arc::new(AxisMap::bilinear(wi, w)))
    }
}
