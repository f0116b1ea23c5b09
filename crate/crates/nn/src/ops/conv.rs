//! 2-d convolution via im2col + gemm.

use crate::par;
use crate::real::{gemm, Mat};
use crate::{Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Reflect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub pad: usize,
    pub padding: Padding,
}

impl Conv2dSpec {
    /// Stride-1 "same" convolution for an odd kernel.
    pub fn same(kernel: usize, padding: Padding) -> Self {
        Self { stride: 1, pad: kernel / 2, padding }
    }

    pub fn out_size(&self, n: usize, kernel: usize) -> usize {
        assert!(n + 2 * self.pad >= kernel, "kernel larger than padded input");
        (n + 2 * self.pad - kernel) / self.stride + 1
    }
}

/// Mirror index without repeating the edge sample; `n == 1` maps to 0.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// `map[k][o]` = source index for kernel tap `k` at output position `o`.
fn tap_map(n: usize, out: usize, kernel: usize, spec: Conv2dSpec) -> Vec<Vec<Option<usize>>> {
    (0..kernel)
        .map(|k| {
            (0..out)
                .map(|o| {
                    let i = (o * spec.stride + k) as isize - spec.pad as isize;
                    match spec.padding {
                        Padding::Zero => (i >= 0 && (i as usize) < n).then_some(i as usize),
                        Padding::Reflect => Some(reflect_index(i, n)),
                    }
                })
                .collect()
        })
        .collect()
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    ho: usize,
    wo: usize,
    rows: Vec<Vec<Option<usize>>>,
    cols: Vec<Vec<Option<usize>>>,
}

impl Geometry {
    fn new(c: usize, h: usize, w: usize, k: usize, spec: Conv2dSpec) -> Self {
        let ho = spec.out_size(h, k);
        let wo = spec.out_size(w, k);
        Self { c, h, w, k, ho, wo, rows: tap_map(h, ho, k, spec), cols: tap_map(w, wo, k, spec) }
    }

    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.ho * self.wo
    }

    fn im2col<T: Real>(&self, x: &[T]) -> Vec<T> {
        let p = self.pixels();
        let mut col = vec![T::zero(); self.patch() * p];
        par::for_each_chunk_mut(&mut col, p, |r, row| {
            let (c, ki, kj) = (r / (self.k * self.k), (r / self.k) % self.k, r % self.k);
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for oy in 0..self.ho {
                let Some(iy) = self.rows[ki][oy] else { continue };
                let src = &plane[iy * self.w..(iy + 1) * self.w];
                let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                for (d, ix) in dst.iter_mut().zip(&self.cols[kj]) {
                    if let Some(ix) = ix {
                        *d = src[*ix];
                    }
                }
            }
        });
        col
    }

    /// Scatter-add `col` back onto an image (adjoint of [`Self::im2col`]).
    fn col2im<T: Real>(&self, col: &[T], dx: &mut [T]) {
        let p = self.pixels();
        let kk = self.k * self.k;
        par::for_each_chunk_mut(dx, self.h * self.w, |c, plane| {
            for t in 0..kk {
                let (ki, kj) = (t / self.k, t % self.k);
                let row = &col[(c * kk + t) * p..(c * kk + t + 1) * p];
                for oy in 0..self.ho {
                    let Some(iy) = self.rows[ki][oy] else { continue };
                    let src = &row[oy * self.wo..(oy + 1) * self.wo];
                    for (&g, ix) in src.iter().zip(&self.cols[kj]) {
                        if let Some(ix) = ix {
                            plane[iy * self.w + ix] = plane[iy * self.w + ix] + g;
                        }
                    }
                }
            }
        });
    }
}

/// Rows per gemm block when splitting across workers. Fixed so the work
/// partition never depends on the thread count; large enough that the
/// shared operand is not re-packed many times.
const ROW_BLOCK: usize = 128;

fn row_chunk(rows: usize) -> usize {
    rows.clamp(1, ROW_BLOCK)
}

/// `out[rows, p] = a[rows, inner] * b[inner, p]`, parallel over fixed row blocks.
fn gemm_rows<T: Real>(a: Mat<'_, T>, b: Mat<'_, T>, beta: T, out: &mut [T]) {
    let rows = if a.transposed { a.cols } else { a.rows };
    let p = if b.transposed { b.rows } else { b.cols };
    let chunk = row_chunk(rows);
    par::for_each_chunk_mut(out, chunk * p, |ci, dst| {
        let r0 = ci * chunk;
        let nr = dst.len() / p;
        if a.transposed {
            // rows of a^T are columns of the stored matrix
            let inner = a.rows;
            let cols = a.cols;
            let mut block = Vec::with_capacity(inner * nr);
            for i in 0..inner {
                block.extend_from_slice(&a.data[i * cols + r0..i * cols + r0 + nr]);
            }
            gemm(T::one(), Mat::new(&block, inner, nr).t(), b, beta, dst);
        } else {
            let inner = a.cols;
            let sub = Mat::new(&a.data[r0 * inner..(r0 + nr) * inner], nr, inner);
            gemm(T::one(), sub, b, beta, dst);
        }
    });
}

/// Forward convolution of one NCHW tensor; exposed for oracle tests and benches.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, spec: Conv2dSpec) -> Tensor<T> {
    let (n, c, h, wd) = x.dims4();
    let (o, wc, k, k2) = w.dims4();
    assert_eq!(c, wc, "conv input channels {c} vs weight {wc}");
    assert_eq!(k, k2, "square kernels only");
    let geo = Geometry::new(c, h, wd, k, spec);
    let p = geo.pixels();
    let mut out = vec![T::zero(); n * o * p];
    let wmat = Mat::new(w.data(), o, geo.patch());
    for s in 0..n {
        let col = geo.im2col(&x.data()[s * c * h * wd..(s + 1) * c * h * wd]);
        let dst = &mut out[s * o * p..(s + 1) * o * p];
        gemm_rows(wmat, Mat::new(&col, geo.patch(), p), T::zero(), dst);
        if let Some(b) = b {
            for (oc, plane) in dst.chunks_mut(p).enumerate() {
                let bv = b.data()[oc];
                plane.iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
    Tensor::from_vec(&[n, o, geo.ho, geo.wo], out)
}

impl<T: Real> Graph<T> {
    /// NCHW convolution with square weights `[out, in, k, k]` and optional bias `[out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec) -> Var {
        let out = conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), spec);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(
            out,
            inputs,
            Box::new(move |ins, _out, g, needs| {
                let (x, w) = (ins[0], ins[1]);
                let (n, c, h, wd) = x.dims4();
                let (o, _, k, _) = w.dims4();
                let geo = Geometry::new(c, h, wd, k, spec);
                let p = geo.pixels();
                let patch = geo.patch();
                let mut dx = needs[0].then(|| Tensor::zeros(x.shape()));
                let mut dw = needs[1].then(|| Tensor::zeros(w.shape()));
                for s in 0..n {
                    let gs = &g.data()[s * o * p..(s + 1) * o * p];
                    let gmat = Mat::new(gs, o, p);
                    if let Some(dw) = dw.as_mut() {
                        let col = geo.im2col(&x.data()[s * c * h * wd..(s + 1) * c * h * wd]);
                        gemm_rows(gmat, Mat::new(&col, patch, p).t(), T::one(), dw.data_mut());
                    }
                    if let Some(dx) = dx.as_mut() {
                        let mut dcol = vec![T::zero(); patch * p];
                        gemm_rows(Mat::new(w.data(), o, patch).t(), gmat, T::zero(), &mut dcol);
                        geo.col2im(&dcol, &mut dx.data_mut()[s * c * h * wd..(s + 1) * c * h * wd]);
                    }
                }
                let mut grads = vec![dx, dw];
                if ins.len() == 3 {
                    let db = needs[2].then(|| {
                        let mut db = vec![T::zero(); o];
                        for s in 0..n {
                            for (oc, acc) in db.iter_mut().enumerate() {
                                let plane = &g.data()[(s * o + oc) * p..(s * o + oc + 1) * p];
                                *acc = *acc + plane.iter().copied().sum::<T>();
                            }
                        }
                        Tensor::from_vec(&[o], db)
                    });
                    grads.push(db);
                }
                grads
            }),
        )
    }
}
