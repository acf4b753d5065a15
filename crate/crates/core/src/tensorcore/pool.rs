use super::graph::{Graph, Op, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

fn planes(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        [b, c, h, w] => Ok((b * c, h, w)),
        _ => Err(Error::shape(format!(
            "{what} expects [C, H, W] or [B, C, H, W], got {shape:?}"
        ))),
    }
}

fn with_spatial(shape: &[usize], h: usize, w: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    let n = s.len();
    s[n - 2] = h;
    s[n - 1] = w;
    s
}

/// PyTorch-style adaptive bin `[floor(i*n/out), ceil((i+1)*n/out))`.
fn bin(i: usize, n: usize, out: usize) -> (usize, usize) {
    (i * n / out, ((i + 1) * n).div_ceil(out))
}

impl<F: Real> Graph<F> {
    /// Non-overlapping `window x window` max pooling; trailing rows and columns that do
    /// not fill a window are dropped. Ties go to the first cell in row-major order.
    pub fn maxpool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        let x = self.value(input);
        let (np, h, w) = planes(x.shape(), "maxpool2d")?;
        if window == 0 || h < window || w < window {
            return Err(Error::shape(format!(
                "maxpool2d window {window} does not fit a {h}x{w} input"
            )));
        }
        let (ho, wo) = (h / window, w / window);
        let xd = x.data();
        let mut out = Vec::with_capacity(np * ho * wo);
        let mut argmax = Vec::with_capacity(np * ho * wo);
        for p in 0..np {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * window * w + ox * window;
                    for dy in 0..window {
                        for dx in 0..window {
                            let k = base + (oy * window + dy) * w + ox * window + dx;
                            if xd[k] > xd[best] {
                                best = k;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let shape = with_spatial(x.shape(), ho, wo);
        let requires = self.any_grad(&[input]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MaxPool2d { input, argmax }, requires))
    }

    /// Averages each plane onto a fixed `out_h x out_w` grid. Bins overlap when the
    /// input is smaller than the grid.
    pub fn adaptive_avg_pool2d(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let x = self.value(input);
        let (np, h, w) = planes(x.shape(), "adaptive_avg_pool2d")?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid("adaptive pooling grid must be non-empty"));
        }
        let xd = x.data();
        let mut out = Vec::with_capacity(np * out_h * out_w);
        for p in 0..np {
            let plane = &xd[p * h * w..][..h * w];
            for i in 0..out_h {
                let (y0, y1) = bin(i, h, out_h);
                for j in 0..out_w {
                    let (x0, x1) = bin(j, w, out_w);
                    let mut s = F::zero();
                    for y in y0..y1 {
                        s += plane[y * w + x0..y * w + x1].iter().copied().sum::<F>();
                    }
                    out.push(s / F::lit(((y1 - y0) * (x1 - x0)) as f64));
                }
            }
        }
        let shape = with_spatial(x.shape(), out_h, out_w);
        let requires = self.any_grad(&[input]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::AdaptiveAvgPool2d { input }, requires))
    }
}

pub(crate) fn adaptive_avg_pool2d_grad<F: Real>(
    x_shape: &[usize],
    out_shape: &[usize],
    gout: &[F],
    gx: &mut [F],
) {
    let (np, h, w) = planes(x_shape, "").expect("checked in forward");
    let n = out_shape.len();
    let (out_h, out_w) = (out_shape[n - 2], out_shape[n - 1]);
    for p in 0..np {
        let gp = &mut gx[p * h * w..][..h * w];
        let go = &gout[p * out_h * out_w..][..out_h * out_w];
        for i in 0..out_h {
            let (y0, y1) = bin(i, h, out_h);
            for j in 0..out_w {
                let (x0, x1) = bin(j, w, out_w);
                let g = go[i * out_w + j] / F::lit(((y1 - y0) * (x1 - x0)) as f64);
                for y in y0..y1 {
                    gp[y * w + x0..y * w + x1].iter_mut().for_each(|v| *v += g);
                }
            }
        }
    }
}
