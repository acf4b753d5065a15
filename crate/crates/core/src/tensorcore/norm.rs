//! Batch normalization over `[B, C, L]` inputs, per channel.

use super::graph::{Graph, Mode, Op, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics owned by the layer, updated in train mode.
pub struct RunningStats<'a, F> {
    pub mean: &'a mut [F],
    pub var: &'a mut [F],
}

impl<F: Real> Graph<F> {
    /// Train mode normalizes with the batch statistics (biased variance) and folds them
    /// into the running statistics (unbiased variance); eval mode uses the running
    /// statistics only.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm1d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: RunningStats<'_, F>,
        mode: Mode,
        eps: f64,
        momentum: f64,
    ) -> Result<Var> {
        let x = self.value(input);
        let &[bn, c, l] = x.shape() else {
            return Err(Error::shape(format!(
                "batchnorm1d expects [B, C, L], got {:?}",
                x.shape()
            )));
        };
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        if g.len() != c || b.len() != c || stats.mean.len() != c || stats.var.len() != c {
            return Err(Error::shape(format!(
                "batchnorm1d parameters must all have {c} channels"
            )));
        }
        let m = bn * l;
        let train = mode == Mode::Train;
        if train && m < 2 {
            return Err(Error::invalid(
                "batchnorm1d in train mode needs more than one value per channel",
            ));
        }
        let xd = x.data();
        let eps = F::lit(eps);
        let mut inv_std = vec![F::zero(); c];
        let mut xhat = vec![F::zero(); xd.len()];
        let mut out = vec![F::zero(); xd.len()];
        for ch in 0..c {
            let rows = (0..bn).map(|bi| (bi * c + ch) * l);
            let (mean, var) = if train {
                let mf = F::lit(m as f64);
                let mean = rows
                    .clone()
                    .map(|o| xd[o..o + l].iter().copied().sum::<F>())
                    .sum::<F>()
                    / mf;
                let var = rows
                    .clone()
                    .map(|o| xd[o..o + l].iter().map(|&v| (v - mean) * (v - mean)).sum::<F>())
                    .sum::<F>()
                    / mf;
                let mom = F::lit(momentum);
                stats.mean[ch] = (F::one() - mom) * stats.mean[ch] + mom * mean;
                let unbiased = var * mf / F::lit((m - 1) as f64);
                stats.var[ch] = (F::one() - mom) * stats.var[ch] + mom * unbiased;
                (mean, var)
            } else {
                (stats.mean[ch], stats.var[ch])
            };
            let is = F::one() / (var + eps).sqrt();
            inv_std[ch] = is;
            for o in rows {
                for k in o..o + l {
                    let h = (xd[k] - mean) * is;
                    xhat[k] = h;
                    out[k] = g[ch] * h + b[ch];
                }
            }
        }
        let requires = self.any_grad(&[input, gamma, beta]);
        let value = Tensor::new(vec![bn, c, l], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            requires,
        ))
    }
}

fn channel_offsets(shape: &[usize], ch: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    let (bn, c, l) = (shape[0], shape[1], shape[2]);
    (0..bn).map(move |bi| {
        let o = (bi * c + ch) * l;
        o..o + l
    })
}

pub(crate) fn batchnorm_grad_input<F: Real>(
    shape: &[usize],
    gamma: &[F],
    xhat: &[F],
    inv_std: &[F],
    train: bool,
    gout: &[F],
    gx: &mut [F],
) {
    let m = F::lit((shape[0] * shape[2]) as f64);
    for ch in 0..shape[1] {
        let scale = gamma[ch] * inv_std[ch];
        if !train {
            for r in channel_offsets(shape, ch) {
                for k in r {
                    gx[k] += scale * gout[k];
                }
            }
            continue;
        }
        let mut sum_g = F::zero();
        let mut sum_gx = F::zero();
        for r in channel_offsets(shape, ch) {
            for k in r {
                sum_g += gout[k];
                sum_gx += gout[k] * xhat[k];
            }
        }
        let s = scale / m;
        for r in channel_offsets(shape, ch) {
            for k in r {
                gx[k] += s * (m * gout[k] - sum_g - xhat[k] * sum_gx);
            }
        }
    }
}

pub(crate) fn batchnorm_grad_gamma<F: Real>(shape: &[usize], xhat: &[F], gout: &[F], gg: &mut [F]) {
    for (ch, g) in gg.iter_mut().enumerate() {
        for r in channel_offsets(shape, ch) {
            for k in r {
                *g += gout[k] * xhat[k];
            }
        }
    }
}

pub(crate) fn batchnorm_grad_beta<F: Real>(shape: &[usize], gout: &[F], gb: &mut [F]) {
    for (ch, g) in gb.iter_mut().enumerate() {
        for r in channel_offsets(shape, ch) {
            *g += gout[r].iter().copied().sum::<F>();
        }
    }
}
