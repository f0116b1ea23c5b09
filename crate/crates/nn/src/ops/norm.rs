use crate::{Graph, Real, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;

/// Per-channel statistics of the batch seen by a training-mode forward.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance (what running averages track).
    pub var_unbiased: Vec<f64>,
}

fn channel_stats<T: Real>(x: &Tensor<T>) -> (Vec<f64>, Vec<f64>, usize) {
    let (n, c, h, w) = x.dims4();
    let hw = h * w;
    let count = n * hw;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            s += x.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().map(|v| v.f64()).sum::<f64>();
        }
        let m = s / count as f64;
        let mut q = 0.0;
        for b in 0..n {
            q += x.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                .iter()
                .map(|v| (v.f64() - m).powi(2))
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = q / count as f64;
    }
    (mean, var, count)
}

impl<T: Real> Graph<T> {
    /// Batch normalization over (N, H, W) per channel.
    ///
    /// In training mode the batch statistics normalize the input and are
    /// returned so the caller can update running averages; otherwise
    /// `running` (mean, biased variance) is used and `None` is returned.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[T], &[T])>,
    ) -> (Var, Option<BatchStats>) {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let hw = h * w;
        let use_batch = self.training || running.is_none();
        let (mean, var, count) = if use_batch {
            channel_stats(xv)
        } else {
            let (rm, rv) = running.expect("running statistics");
            (rm.iter().map(|v| v.f64()).collect(), rv.iter().map(|v| v.f64()).collect(), n * hw)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gv = self.value(gamma).data().to_vec();
        let bv = self.value(beta).data().to_vec();
        let mut xhat = vec![T::zero(); xv.numel()];
        let mut out = vec![T::zero(); xv.numel()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                let (m, is) = (mean[ch], inv_std[ch]);
                for i in base..base + hw {
                    let xh = (xv.data()[i].f64() - m) * is;
                    xhat[i] = T::of(xh);
                    out[i] = T::of(xh) * gv[ch] + bv[ch];
                }
            }
        }
        let stats = use_batch.then(|| BatchStats {
            mean: mean.clone(),
            var_unbiased: var
                .iter()
                .map(|v| if count > 1 { v * count as f64 / (count - 1) as f64 } else { *v })
                .collect(),
        });
        let xhat = Tensor::from_vec(&[n, c, h, w], xhat);
        let node = self.push(
            Tensor::from_vec(&[n, c, h, w], out),
            vec![x, gamma, beta],
            Box::new(move |ins, _out, g, needs| {
                let gamma = ins[1].data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut sum_g = vec![0.0f64; c];
                let mut sum_gx = vec![0.0f64; c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * hw;
                        for i in base..base + hw {
                            let gi = g.data()[i].f64();
                            sum_g[ch] += gi;
                            sum_gx[ch] += gi * xhat.data()[i].f64();
                        }
                    }
                }
                for ch in 0..c {
                    dgamma[ch] = T::of(sum_gx[ch]);
                    dbeta[ch] = T::of(sum_g[ch]);
                }
                let dx = needs[0].then(|| {
                    let mut dx = vec![T::zero(); n * c * hw];
                    let cnt = count as f64;
                    for b in 0..n {
                        for ch in 0..c {
                            let base = (b * c + ch) * hw;
                            let scale = gamma[ch].f64() * inv_std[ch];
                            for i in base..base + hw {
                                let gi = g.data()[i].f64();
                                let v = if use_batch {
                                    scale * (gi - sum_g[ch] / cnt - xhat.data()[i].f64() * sum_gx[ch] / cnt)
                                } else {
                                    scale * gi
                                };
                                dx[i] = T::of(v);
                            }
                        }
                    }
                    Tensor::from_vec(&[n, c, h, w], dx)
                });
                vec![
                    dx,
                    needs[1].then(|| Tensor::from_vec(&[c], dgamma)),
                    needs[2].then(|| Tensor::from_vec(&[c], dbeta)),
                ]
            }),
        );
        (node, stats)
    }
}
