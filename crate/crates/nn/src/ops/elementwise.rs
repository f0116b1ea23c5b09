use crate::{Graph, Real, Tensor, Var};

impl<T: Real> Graph<T> {
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::of(slope);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * s });
        self.push(
            out,
            vec![x],
            Box::new(move |ins, _out, g, _| {
                vec![Some(ins[0].zip_map(g, |x, g| if x > T::zero() { g } else { g * s }))]
            }),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(
            out,
            vec![x],
            Box::new(|_ins, out, g, _| vec![Some(out.zip_map(g, |y, g| g * y * (T::one() - y)))]),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |a, b| a + b);
        self.push(out, vec![a, b], Box::new(|_, _, g, _| vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |a, b| a - b);
        self.push(out, vec![a, b], Box::new(|_, _, g, _| vec![Some(g.clone()), Some(g.map(|v| -v))]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let k = T::of(k);
        let out = self.value(x).map(|v| v * k);
        self.push(out, vec![x], Box::new(move |_, _, g, _| vec![Some(g.map(|v| v * k))]))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, k: &Tensor<T>) -> Var {
        let out = self.value(x).zip_map(k, |a, b| a * b);
        let k = k.clone();
        self.push(out, vec![x], Box::new(move |_, _, g, _| vec![Some(g.zip_map(&k, |a, b| a * b))]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let original = self.value(x).shape().to_vec();
        let out = self.value(x).clone().reshape(shape);
        self.push(out, vec![x], Box::new(move |_, _, g, _| vec![Some(g.clone().reshape(&original))]))
    }

    /// Concatenate NCHW tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Var {
        let shapes: Vec<(usize, usize, usize, usize)> = parts.iter().map(|&p| self.value(p).dims4()).collect();
        let (n, _, h, w) = shapes[0];
        for s in &shapes {
            assert!(s.0 == n && s.2 == h && s.3 == w, "concat shape mismatch {shapes:?}");
        }
        let chans: Vec<usize> = shapes.iter().map(|s| s.1).collect();
        let total: usize = chans.iter().sum();
        let hw = h * w;
        let mut out = Vec::with_capacity(n * total * hw);
        for b in 0..n {
            for (&p, &c) in parts.iter().zip(&chans) {
                out.extend_from_slice(&self.value(p).data()[b * c * hw..(b + 1) * c * hw]);
            }
        }
        self.push(
            Tensor::from_vec(&[n, total, h, w], out),
            parts.to_vec(),
            Box::new(move |_, _, g, needs| {
                let mut grads = Vec::with_capacity(chans.len());
                let mut offset = 0;
                for (i, &c) in chans.iter().enumerate() {
                    grads.push(needs[i].then(|| {
                        let mut d = Vec::with_capacity(n * c * hw);
                        for b in 0..n {
                            let start = (b * total + offset) * hw;
                            d.extend_from_slice(&g.data()[start..start + c * hw]);
                        }
                        Tensor::from_vec(&[n, c, h, w], d)
                    }));
                    offset += c;
                }
                grads
            }),
        )
    }

    /// Mean absolute difference to a constant target, reduced to a scalar.
    /// The subgradient at zero difference is 0.
    pub fn l1_mean(&mut self, x: Var, target: &Tensor<T>) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape(), target.shape(), "l1 target shape");
        let count = xv.numel() as f64;
        let s: f64 = xv.data().iter().zip(target.data()).map(|(a, b)| (a.f64() - b.f64()).abs()).sum();
        let target = target.clone();
        self.push(
            Tensor::scalar(T::of(s / count)),
            vec![x],
            Box::new(move |ins, _, g, _| {
                let k = g.item() / T::of(count);
                vec![Some(ins[0].zip_map(&target, |a, b| {
                    let d = a - b;
                    if d > T::zero() {
                        k
                    } else if d < T::zero() {
                        -k
                    } else {
                        T::zero()
                    }
                }))]
            }),
        )
    }

    /// Sum of all elements to a scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_f64();
        self.push(
            Tensor::scalar(T::of(s)),
            vec![x],
            Box::new(|ins, _, g, _| vec![Some(Tensor::full(ins[0].shape(), g.item()))]),
        )
    }

    /// Global average pooling: `[n, c, h, w] -> [n, c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let out: Vec<T> = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|plane| T::of(plane.iter().map(|v| v.f64()).sum::<f64>() / hw as f64))
            .collect();
        self.push(
            Tensor::from_vec(&[n, c], out),
            vec![x],
            Box::new(move |_, _, g, _| {
                let inv = T::of(1.0 / hw as f64);
                let mut d = Vec::with_capacity(n * c * hw);
                for &gv in g.data() {
                    d.extend(std::iter::repeat(gv * inv).take(hw));
                }
                vec![Some(Tensor::from_vec(&[n, c, h, w], d))]
            }),
        )
    }

    /// Bias-free fully connected layer: `x [n, in] * w^T` with `w [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Var {
        let (n, fin) = self.value(x).dims2();
        let (fout, win) = self.value(w).dims2();
        assert_eq!(fin, win, "linear input features");
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        let mut out = vec![T::zero(); n * fout];
        for b in 0..n {
            for o in 0..fout {
                out[b * fout + o] = (0..fin).map(|i| xv[b * fin + i] * wv[o * fin + i]).sum();
            }
        }
        self.push(
            Tensor::from_vec(&[n, fout], out),
            vec![x, w],
            Box::new(move |ins, _, g, needs| {
                let (xv, wv, gv) = (ins[0].data(), ins[1].data(), g.data());
                let dx = needs[0].then(|| {
                    let mut d = vec![T::zero(); n * fin];
                    for b in 0..n {
                        for i in 0..fin {
                            d[b * fin + i] = (0..fout).map(|o| gv[b * fout + o] * wv[o * fin + i]).sum();
                        }
                    }
                    Tensor::from_vec(&[n, fin], d)
                });
                let dw = needs[1].then(|| {
                    let mut d = vec![T::zero(); fout * fin];
                    for o in 0..fout {
                        for i in 0..fin {
                            d[o * fin + i] = (0..n).map(|b| gv[b * fout + o] * xv[b * fin + i]).sum();
                        }
                    }
                    Tensor::from_vec(&[fout, fin], d)
                });
                vec![dx, dw]
            }),
        )
    }

    /// Row-wise softmax of `[n, k]`.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (n, k) = self.value(x).dims2();
        let mut out = vec![T::zero(); n * k];
        for (row, dst) in self.value(x).data().chunks(k).zip(out.chunks_mut(k)) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
            let e: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for (d, v) in dst.iter_mut().zip(e) {
                *d = T::of(v / z);
            }
        }
        self.push(
            Tensor::from_vec(&[n, k], out),
            vec![x],
            Box::new(move |_, out, g, _| {
                let mut d = vec![T::zero(); n * k];
                for b in 0..n {
                    let y = &out.data()[b * k..(b + 1) * k];
                    let gy = &g.data()[b * k..(b + 1) * k];
                    let dot: T = y.iter().zip(gy).map(|(&a, &b)| a * b).sum();
                    for j in 0..k {
                        d[b * k + j] = y[j] * (gy[j] - dot);
                    }
                }
                vec![Some(Tensor::from_vec(&[n, k], d))]
            }),
        )
    }

    /// Divide each row of `[n, k]` by its sum.
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let (n, k) = self.value(x).dims2();
        let sums: Vec<T> = self.value(x).data().chunks(k).map(|r| r.iter().copied().sum()).collect();
        let mut out = self.value(x).clone();
        for (row, &s) in out.data_mut().chunks_mut(k).zip(&sums) {
            row.iter_mut().for_each(|v| *v = *v / s);
        }
        self.push(
            out,
            vec![x],
            Box::new(move |_, out, g, _| {
                let mut d = vec![T::zero(); n * k];
                for b in 0..n {
                    let y = &out.data()[b * k..(b + 1) * k];
                    let gy = &g.data()[b * k..(b + 1) * k];
                    let dot: T = y.iter().zip(gy).map(|(&a, &b)| a * b).sum();
                    for j in 0..k {
                        d[b * k + j] = (gy[j] - dot) / sums[b];
                    }
                }
                vec![Some(Tensor::from_vec(&[n, k], d))]
            }),
        )
    }

    /// Per-sample weighted sum over channels: `x [n, c, h, w]`, `s [n, c]` -> `[n, 1, h, w]`.
    pub fn weighted_channel_sum(&mut self, x: Var, s: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(s).shape(), &[n, c], "channel weights shape");
        let hw = h * w;
        let (xv, sv) = (self.value(x).data(), self.value(s).data());
        let mut out = vec![T::zero(); n * hw];
        for b in 0..n {
            let dst = &mut out[b * hw..(b + 1) * hw];
            for ch in 0..c {
                let wgt = sv[b * c + ch];
                let plane = &xv[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                for (d, &v) in dst.iter_mut().zip(plane) {
                    *d = *d + wgt * v;
                }
            }
        }
        self.push(
            Tensor::from_vec(&[n, 1, h, w], out),
            vec![x, s],
            Box::new(move |ins, _, g, needs| {
                let (xv, sv, gv) = (ins[0].data(), ins[1].data(), g.data());
                let dx = needs[0].then(|| {
                    let mut d = vec![T::zero(); n * c * hw];
                    for b in 0..n {
                        for ch in 0..c {
                            let wgt = sv[b * c + ch];
                            let dst = &mut d[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                            for (dv, &gg) in dst.iter_mut().zip(&gv[b * hw..(b + 1) * hw]) {
                                *dv = wgt * gg;
                            }
                        }
                    }
                    Tensor::from_vec(&[n, c, h, w], d)
                });
                let ds = needs[1].then(|| {
                    let mut d = vec![T::zero(); n * c];
                    for b in 0..n {
                        for ch in 0..c {
                            let plane = &xv[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                            d[b * c + ch] = plane.iter().zip(&gv[b * hw..(b + 1) * hw]).map(|(&a, &b)| a * b).sum();
                        }
                    }
                    Tensor::from_vec(&[n, c], d)
                });
                vec![dx, ds]
            }),
        )
    }
}
