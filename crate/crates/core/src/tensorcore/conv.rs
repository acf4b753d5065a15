//! 1-D and 2-D cross-correlation with symmetric zero padding.
//!
//! Inputs may be unbatched (`[C, L]`, `[C, H, W]`) or batched (`[B, C, L]`,
//! `[B, C, H, W]`); the output keeps the same rank.

use super::graph::{Graph, Op, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Output length of a strided, padded window sweep.
pub fn out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    (stride >= 1 && kernel >= 1 && kernel <= padded).then(|| (padded - kernel) / stride + 1)
}

/// Output positions `t` with `0 <= t*stride + k - padding < len`, as a half-open range.
#[inline]
fn valid(out_len: usize, len: usize, stride: usize, k: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k {
        (padding - k).div_ceil(stride)
    } else {
        0
    };
    let hi = if len + padding > k {
        ((len + padding - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn dims1(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, l] => Ok((1, c, l)),
        [b, c, l] => Ok((b, c, l)),
        _ => Err(Error::shape(format!(
            "conv1d expects [C, L] or [B, C, L], got {shape:?}"
        ))),
    }
}

fn dims2(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w)),
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(Error::shape(format!(
            "conv2d expects [C, H, W] or [B, C, H, W], got {shape:?}"
        ))),
    }
}

/// `sum(a[i] * b[i])` with independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    const LANES: usize = 8;
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [F::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = F::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

#[inline]
fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// `out[j] += t0*x[j-1] + t1*x[j] + t2*x[j+1]` with zeros outside `x`.
#[inline]
fn taps3_same<F: Real>(t: [F; 3], x: &[F], out: &mut [F]) {
    let n = out.len();
    debug_assert_eq!(x.len(), n);
    if n == 1 {
        out[0] += t[1] * x[0];
        return;
    }
    out[0] += t[1] * x[0] + t[2] * x[1];
    out[n - 1] += t[0] * x[n - 2] + t[1] * x[n - 1];
    let mid = &mut out[1..n - 1];
    for (((o, &a), &b), &c) in mid.iter_mut().zip(&x[..n - 2]).zip(&x[1..n - 1]).zip(&x[2..]) {
        *o += t[0] * a + t[1] * b + t[2] * c;
    }
}

/// The three tap gradients of `taps3_same`: `sum_j g[j] * x[j+k-1]` for k = 0, 1, 2.
#[inline]
fn dots3_same<F: Real>(g: &[F], x: &[F]) -> [F; 3] {
    let n = g.len();
    debug_assert_eq!(x.len(), n);
    if n == 1 {
        return [F::zero(), g[0] * x[0], F::zero()];
    }
    [dot(&g[1..], &x[..n - 1]), dot(g, x), dot(&g[..n - 1], &x[1..])]
}

impl<F: Real> Graph<F> {
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let (bn, ci, l) = dims1(x.shape())?;
        let &[co, wci, k] = w.shape() else {
            return Err(Error::shape(format!(
                "conv1d weight must be [C_out, C_in, K], got {:?}",
                w.shape()
            )));
        };
        if wci != ci {
            return Err(Error::shape(format!(
                "conv1d weight expects {wci} input channels, input has {ci}"
            )));
        }
        if b.len() != co {
            return Err(Error::shape(format!(
                "conv1d bias has {} values for {co} output channels",
                b.len()
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv1d stride must be >= 1"));
        }
        let lo = out_len(l, k, stride, padding).ok_or_else(|| {
            Error::shape(format!(
                "conv1d kernel {k} longer than padded input {}",
                l + 2 * padding
            ))
        })?;

        let (xd, wd, bd) = (x.data(), w.data(), b.data());
        let mut out = vec![F::zero(); bn * co * lo];
        for bi in 0..bn {
            for o in 0..co {
                let row = &mut out[(bi * co + o) * lo..][..lo];
                row.fill(bd[o]);
                for c in 0..ci {
                    let xr = &xd[(bi * ci + c) * l..][..l];
                    for kk in 0..k {
                        let wv = wd[(o * ci + c) * k + kk];
                        let (t0, t1) = valid(lo, l, stride, kk, padding);
                        if stride == 1 {
                            let src = &xr[t0 + kk - padding..][..t1 - t0];
                            axpy(wv, src, &mut row[t0..t1]);
                        } else {
                            for t in t0..t1 {
                                row[t] += wv * xr[t * stride + kk - padding];
                            }
                        }
                    }
                }
            }
        }
        let shape = if x.ndim() == 2 {
            vec![co, lo]
        } else {
            vec![bn, co, lo]
        };
        let requires = self.any_grad(&[input, weight, bias]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            requires,
        ))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let (bn, ci, h, wid) = dims2(x.shape())?;
        let &[co, wci, kh, kw] = w.shape() else {
            return Err(Error::shape(format!(
                "conv2d weight must be [C_out, C_in, KH, KW], got {:?}",
                w.shape()
            )));
        };
        if wci != ci {
            return Err(Error::shape(format!(
                "conv2d weight expects {wci} input channels, input has {ci}"
            )));
        }
        if b.len() != co {
            return Err(Error::shape(format!(
                "conv2d bias has {} values for {co} output channels",
                b.len()
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        let (ho, wo) = match (out_len(h, kh, stride, padding), out_len(wid, kw, stride, padding)) {
            (Some(ho), Some(wo)) => (ho, wo),
            _ => {
                return Err(Error::shape(format!(
                    "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
                    h + 2 * padding,
                    wid + 2 * padding
                )))
            }
        };

        let (xd, wd, bd) = (x.data(), w.data(), b.data());
        let same3 = stride == 1 && kw == 3 && padding == 1;
        let mut out = vec![F::zero(); bn * co * ho * wo];
        for bi in 0..bn {
            for o in 0..co {
                let plane = &mut out[(bi * co + o) * ho * wo..][..ho * wo];
                plane.fill(bd[o]);
                for c in 0..ci {
                    let xp = &xd[(bi * ci + c) * h * wid..][..h * wid];
                    for ky in 0..kh {
                        let (y0, y1) = valid(ho, h, stride, ky, padding);
                        if same3 {
                            let k = ((o * ci + c) * kh + ky) * kw;
                            let t = [wd[k], wd[k + 1], wd[k + 2]];
                            for oy in y0..y1 {
                                let iy = oy + ky - padding;
                                taps3_same(t, &xp[iy * wid..][..wid], &mut plane[oy * wo..][..wo]);
                            }
                            continue;
                        }
                        for kx in 0..kw {
                            let wv = wd[((o * ci + c) * kh + ky) * kw + kx];
                            let (x0, x1) = valid(wo, wid, stride, kx, padding);
                            for oy in y0..y1 {
                                let iy = oy * stride + ky - padding;
                                let orow = &mut plane[oy * wo..][x0..x1];
                                let xrow = &xp[iy * wid..][..wid];
                                if stride == 1 {
                                    axpy(wv, &xrow[x0 + kx - padding..][..x1 - x0], orow);
                                } else {
                                    for (j, ov) in orow.iter_mut().enumerate() {
                                        *ov += wv * xrow[(x0 + j) * stride + kx - padding];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let shape = if x.ndim() == 3 {
            vec![co, ho, wo]
        } else {
            vec![bn, co, ho, wo]
        };
        let requires = self.any_grad(&[input, weight, bias]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            requires,
        ))
    }
}

pub(crate) fn grad_bias<F: Real>(gout: &[F], c_out: usize, spatial: usize, gb: &mut [F]) {
    for (k, chunk) in gout.chunks(spatial).enumerate() {
        gb[k % c_out] += chunk.iter().copied().sum::<F>();
    }
}

pub(crate) fn conv1d_grad_input<F: Real>(
    x_shape: &[usize],
    w: &Tensor<F>,
    gout: &[F],
    stride: usize,
    padding: usize,
    gx: &mut [F],
) {
    let (bn, ci, l) = dims1(x_shape).expect("checked in forward");
    let [co, _, k] = w.shape().try_into().expect("checked in forward");
    let lo = gout.len() / (bn * co);
    let wd = w.data();
    for bi in 0..bn {
        for o in 0..co {
            let grow = &gout[(bi * co + o) * lo..][..lo];
            for c in 0..ci {
                let gxr = &mut gx[(bi * ci + c) * l..][..l];
                for kk in 0..k {
                    let wv = wd[(o * ci + c) * k + kk];
                    let (t0, t1) = valid(lo, l, stride, kk, padding);
                    if stride == 1 {
                        axpy(wv, &grow[t0..t1], &mut gxr[t0 + kk - padding..][..t1 - t0]);
                    } else {
                        for t in t0..t1 {
                            gxr[t * stride + kk - padding] += wv * grow[t];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv1d_grad_weight<F: Real>(
    x: &Tensor<F>,
    w_shape: &[usize],
    gout: &[F],
    stride: usize,
    padding: usize,
    gw: &mut [F],
) {
    let (bn, ci, l) = dims1(x.shape()).expect("checked in forward");
    let [co, _, k] = w_shape.try_into().expect("checked in forward");
    let lo = gout.len() / (bn * co);
    let xd = x.data();
    for bi in 0..bn {
        for o in 0..co {
            let grow = &gout[(bi * co + o) * lo..][..lo];
            for c in 0..ci {
                let xr = &xd[(bi * ci + c) * l..][..l];
                for kk in 0..k {
                    let (t0, t1) = valid(lo, l, stride, kk, padding);
                    let s = if stride == 1 {
                        dot(&grow[t0..t1], &xr[t0 + kk - padding..][..t1 - t0])
                    } else {
                        (t0..t1).fold(F::zero(), |s, t| s + grow[t] * xr[t * stride + kk - padding])
                    };
                    gw[(o * ci + c) * k + kk] += s;
                }
            }
        }
    }
}

pub(crate) fn conv2d_grad_input<F: Real>(
    x_shape: &[usize],
    w: &Tensor<F>,
    gout: &[F],
    stride: usize,
    padding: usize,
    gx: &mut [F],
) {
    let (bn, ci, h, wid) = dims2(x_shape).expect("checked in forward");
    let [co, _, kh, kw] = w.shape().try_into().expect("checked in forward");
    let ho = out_len(h, kh, stride, padding).expect("checked in forward");
    let wo = out_len(wid, kw, stride, padding).expect("checked in forward");
    let wd = w.data();
    let same3 = stride == 1 && kw == 3 && padding == 1;
    for bi in 0..bn {
        for o in 0..co {
            let gp = &gout[(bi * co + o) * ho * wo..][..ho * wo];
            for c in 0..ci {
                let gxp = &mut gx[(bi * ci + c) * h * wid..][..h * wid];
                for ky in 0..kh {
                    let (y0, y1) = valid(ho, h, stride, ky, padding);
                    if same3 {
                        let k = ((o * ci + c) * kh + ky) * kw;
                        // the adjoint of a 3-tap correlation is the same sweep with taps reversed
                        let t = [wd[k + 2], wd[k + 1], wd[k]];
                        for oy in y0..y1 {
                            let iy = oy + ky - padding;
                            taps3_same(t, &gp[oy * wo..][..wo], &mut gxp[iy * wid..][..wid]);
                        }
                        continue;
                    }
                    for kx in 0..kw {
                        let wv = wd[((o * ci + c) * kh + ky) * kw + kx];
                        let (x0, x1) = valid(wo, wid, stride, kx, padding);
                        for oy in y0..y1 {
                            let iy = oy * stride + ky - padding;
                            let grow = &gp[oy * wo..][x0..x1];
                            let gxrow = &mut gxp[iy * wid..][..wid];
                            if stride == 1 {
                                axpy(wv, grow, &mut gxrow[x0 + kx - padding..][..x1 - x0]);
                            } else {
                                for (j, &g) in grow.iter().enumerate() {
                                    gxrow[(x0 + j) * stride + kx - padding] += wv * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_grad_weight<F: Real>(
    x: &Tensor<F>,
    w_shape: &[usize],
    gout: &[F],
    stride: usize,
    padding: usize,
    gw: &mut [F],
) {
    let (bn, ci, h, wid) = dims2(x.shape()).expect("checked in forward");
    let [co, _, kh, kw] = w_shape.try_into().expect("checked in forward");
    let ho = out_len(h, kh, stride, padding).expect("checked in forward");
    let wo = out_len(wid, kw, stride, padding).expect("checked in forward");
    let xd = x.data();
    let same3 = stride == 1 && kw == 3 && padding == 1;
    for bi in 0..bn {
        for o in 0..co {
            let gp = &gout[(bi * co + o) * ho * wo..][..ho * wo];
            for c in 0..ci {
                let xp = &xd[(bi * ci + c) * h * wid..][..h * wid];
                for ky in 0..kh {
                    let (y0, y1) = valid(ho, h, stride, ky, padding);
                    if same3 {
                        let mut acc = [F::zero(); 3];
                        for oy in y0..y1 {
                            let iy = oy + ky - padding;
                            let d = dots3_same(&gp[oy * wo..][..wo], &xp[iy * wid..][..wid]);
                            for (a, v) in acc.iter_mut().zip(d) {
                                *a += v;
                            }
                        }
                        let k = ((o * ci + c) * kh + ky) * kw;
                        for (gv, a) in gw[k..k + 3].iter_mut().zip(acc) {
                            *gv += a;
                        }
                        continue;
                    }
                    for kx in 0..kw {
                        let (x0, x1) = valid(wo, wid, stride, kx, padding);
                        let mut s = F::zero();
                        for oy in y0..y1 {
                            let iy = oy * stride + ky - padding;
                            let grow = &gp[oy * wo..][x0..x1];
                            let xrow = &xp[iy * wid..][..wid];
                            s += if stride == 1 {
                                dot(grow, &xrow[x0 + kx - padding..][..x1 - x0])
                            } else {
                                grow.iter().enumerate().fold(F::zero(), |a, (j, &g)| {
                                    a + g * xrow[(x0 + j) * stride + kx - padding]
                                })
                            };
                        }
                        gw[((o * ci + c) * kh + ky) * kw + kx] += s;
                    }
                }
            }
        }
    }
}
