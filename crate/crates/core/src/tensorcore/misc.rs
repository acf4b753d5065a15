use rand::Rng;

use super::conv::dot;
use super::graph::{Graph, Mode, Op, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

pub(crate) struct CosineSaved<F> {
    pub(crate) feat: usize,
    pub(crate) norm_a: Vec<F>,
    pub(crate) norm_b: Vec<F>,
    pub(crate) active_a: Vec<bool>,
    pub(crate) active_b: Vec<bool>,
    pub(crate) cos: Vec<F>,
}

impl<F: Real> Graph<F> {
    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.leaky_relu(input, 0.0)
    }

    /// `x` for positive inputs, `alpha * x` otherwise.
    pub fn leaky_relu(&mut self, input: Var, alpha: f64) -> Result<Var> {
        let alpha = F::lit(alpha);
        let x = self.value(input);
        let data = x
            .data()
            .iter()
            .map(|&v| if v > F::zero() { v } else { alpha * v })
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let requires = self.any_grad(&[input]);
        Ok(self.push(value, Op::LeakyRelu { input, alpha }, requires))
    }

    /// Affine map over the last axis: `x W^T + b`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let &[f_out, f_in] = w.shape() else {
            return Err(Error::shape(format!(
                "linear weight must be [F_out, F_in], got {:?}",
                w.shape()
            )));
        };
        if x.shape().last() != Some(&f_in) {
            return Err(Error::shape(format!(
                "linear expects {f_in} input features, input shape {:?}",
                x.shape()
            )));
        }
        if b.len() != f_out {
            return Err(Error::shape(format!(
                "linear bias has {} values for {f_out} outputs",
                b.len()
            )));
        }
        let (wd, bd) = (w.data(), b.data());
        let mut out = Vec::with_capacity(x.len() / f_in * f_out);
        for row in x.data().chunks(f_in) {
            for o in 0..f_out {
                out.push(bd[o] + dot(&wd[o * f_in..][..f_in], row));
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = f_out;
        let requires = self.any_grad(&[input, weight, bias]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }, requires))
    }

    /// Inverted dropout: in train mode each element is zeroed with probability `p` and
    /// survivors are scaled by `1 / (1 - p)`. Identity in eval mode.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout rate {p} outside [0, 1)")));
        }
        let x = self.value(input);
        let mask: Vec<F> = if mode == Mode::Train && p > 0.0 {
            let keep = F::lit(1.0 / (1.0 - p));
            (0..x.len())
                .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
                .collect()
        } else {
            vec![F::one(); x.len()]
        };
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let requires = self.any_grad(&[input]);
        Ok(self.push(value, Op::Dropout { input, mask }, requires))
    }

    /// Row-wise `dot(a, b) / (max(|a|, eps) * max(|b|, eps))`. `[F]` inputs give a
    /// scalar, `[B, F]` inputs give `[B]`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() || at.ndim() == 0 || at.ndim() > 2 {
            return Err(Error::shape(format!(
                "cosine_similarity needs equal [F] or [B, F] shapes, got {:?} and {:?}",
                at.shape(),
                bt.shape()
            )));
        }
        let feat = *at.shape().last().expect("rank >= 1");
        let eps = F::lit(eps);
        let mut saved = CosineSaved {
            feat,
            norm_a: Vec::new(),
            norm_b: Vec::new(),
            active_a: Vec::new(),
            active_b: Vec::new(),
            cos: Vec::new(),
        };
        for (ra, rb) in at.data().chunks(feat).zip(bt.data().chunks(feat)) {
            let na = dot(ra, ra).sqrt();
            let nb = dot(rb, rb).sqrt();
            saved.active_a.push(na > eps);
            saved.active_b.push(nb > eps);
            let (na, nb) = (na.max(eps), nb.max(eps));
            saved.norm_a.push(na);
            saved.norm_b.push(nb);
            saved.cos.push(dot(ra, rb) / (na * nb));
        }
        let shape = if at.ndim() == 1 {
            Vec::new()
        } else {
            vec![at.shape()[0]]
        };
        let value = Tensor::new(shape, saved.cos.clone())?;
        let requires = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Cosine { a, b, saved }, requires))
    }

    /// Mean of squared differences; a scalar.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.len() != t.len() {
            return Err(Error::shape(format!(
                "mse_loss: {} predictions for {} targets",
                p.len(),
                t.len()
            )));
        }
        let n = F::lit(p.len() as f64);
        let s = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<F>();
        let requires = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse { pred, target }, requires))
    }

    /// Averages over the last axis, e.g. temporal mean pooling `[B, C, L] -> [B, C]`.
    pub fn mean_last(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let Some((&len, rest)) = x.shape().split_last() else {
            return Err(Error::shape("mean_last needs rank >= 1"));
        };
        let inv = F::one() / F::lit(len as f64);
        let data = x
            .data()
            .chunks(len)
            .map(|r| r.iter().copied().sum::<F>() * inv)
            .collect();
        let value = Tensor::new(rest.to_vec(), data)?;
        let requires = self.any_grad(&[input]);
        Ok(self.push(value, Op::MeanLast { input }, requires))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(Error::shape(format!(
                "add: shapes {:?} and {:?} differ",
                at.shape(),
                bt.shape()
            )));
        }
        let data = at.data().iter().zip(bt.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(at.shape().to_vec(), data)?;
        let requires = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add { a, b }, requires))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        let requires = self.any_grad(&[input]);
        Ok(self.push(value, Op::Reshape { input }, requires))
    }
}

pub(crate) fn linear_grad_input<F: Real>(w: &Tensor<F>, gout: &[F], gx: &mut [F]) {
    let (f_out, f_in) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    for (grow, gxrow) in gout.chunks(f_out).zip(gx.chunks_mut(f_in)) {
        for (o, &g) in grow.iter().enumerate() {
            for (v, &wv) in gxrow.iter_mut().zip(&wd[o * f_in..][..f_in]) {
                *v += g * wv;
            }
        }
    }
}

pub(crate) fn linear_grad_weight<F: Real>(x: &Tensor<F>, w_shape: &[usize], gout: &[F], gw: &mut [F]) {
    let (f_out, f_in) = (w_shape[0], w_shape[1]);
    for (grow, xrow) in gout.chunks(f_out).zip(x.data().chunks(f_in)) {
        for (o, &g) in grow.iter().enumerate() {
            for (v, &xv) in gw[o * f_in..][..f_in].iter_mut().zip(xrow) {
                *v += g * xv;
            }
        }
    }
}

/// Gradient of row-wise cosine with respect to `x`, where `y` is the other operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cosine_grad<F: Real>(
    x: &[F],
    y: &[F],
    norm_x: &[F],
    norm_y: &[F],
    active_x: &[bool],
    saved: &CosineSaved<F>,
    gout: &[F],
    gx: &mut [F],
) {
    let feat = saved.feat;
    for r in 0..norm_x.len() {
        let (nx, ny, c) = (norm_x[r], norm_y[r], saved.cos[r]);
        let go = gout[r];
        let k1 = go / (nx * ny);
        let k2 = if active_x[r] {
            go * c / (nx * nx)
        } else {
            F::zero()
        };
        let rows = r * feat..(r + 1) * feat;
        for ((g, &xv), &yv) in gx[rows.clone()].iter_mut().zip(&x[rows.clone()]).zip(&y[rows]) {
            *g += k1 * yv - k2 * xv;
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn vec1(g: &mut Graph<f64>, v: &[f64]) -> Var {
        g.constant(Tensor::new(vec![v.len()], v.to_vec()).unwrap())
    }

    #[test]
    fn activations() {
        let mut g = Graph::new();
        let x = vec1(&mut g, &[-1.0, 2.0, -10.0]);
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 2.0, 0.0]);
        let l = g.leaky_relu(x, LEAKY_SLOPE).unwrap();
        assert_eq!(g.value(l).data()[2], -0.1);
    }

    #[test]
    fn activation_slope_at_three_is_one() {
        for alpha in [0.0, LEAKY_SLOPE] {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::new(vec![1], vec![3.0]).unwrap(), true);
            let y = g.leaky_relu(x, alpha).unwrap();
            let zero = vec1(&mut g, &[0.0]);
            let loss = g.mse_loss(y, zero).unwrap();
            g.backward(loss).unwrap();
            // d(y^2)/dx = 2 y dy/dx = 6
            assert_eq!(g.grad(x).unwrap(), &[6.0]);
        }
    }

    #[test]
    fn linear_cases() {
        let mut g = Graph::new();
        let x = vec1(&mut g, &[1.0, 2.0]);
        let eye = g.constant(Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap());
        let zb = vec1(&mut g, &[0.0, 0.0]);
        let y = g.linear(x, eye, zb).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);

        let zw = g.constant(Tensor::zeros(vec![2, 2]));
        let b = vec1(&mut g, &[3.0, -1.0]);
        let y = g.linear(x, zw, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, -1.0]);

        // [[1,2],[3,4]] @ [1,2] = [5, 11]
        let w = g.constant(Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap());
        let y = g.linear(x, w, zb).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 11.0]);

        let bad = g.constant(Tensor::zeros(vec![2, 3]));
        assert!(g.linear(x, bad, zb).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![100], 2.0));
        let y = g.dropout(x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
        let y = g.dropout(x, 0.7, Mode::Eval, &mut rng).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
        assert!(g.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(g.dropout(x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_survivor_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![100_000], 1.0));
        let y = g.dropout(x, 0.2, Mode::Train, &mut rng).unwrap();
        let kept = g.value(y).data().iter().filter(|&&v| v != 0.0).count();
        let frac = kept as f64 / 1e5;
        assert!((frac - 0.8).abs() < 0.01, "{frac}");
        assert!(g
            .value(y)
            .data()
            .iter()
            .all(|&v: &f64| v == 0.0 || (v - 1.25).abs() < 1e-12));
    }

    #[test]
    fn cosine_cases() {
        let mut g = Graph::new();
        let a = vec1(&mut g, &[1.0, 0.0]);
        let b = vec1(&mut g, &[1.0, 1.0]);
        let c = vec1(&mut g, &[0.0, 3.0]);
        let ab = g.cosine_similarity(a, b, 1e-8).unwrap();
        assert!((g.value(ab).item().unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let aa = g.cosine_similarity(b, b, 1e-8).unwrap();
        assert!((g.value(aa).item().unwrap() - 1.0).abs() < 1e-15);
        let ac = g.cosine_similarity(a, c, 1e-8).unwrap();
        assert_eq!(g.value(ac).item().unwrap(), 0.0);
        let z = vec1(&mut g, &[0.0, 0.0]);
        let az = g.cosine_similarity(a, z, 1e-8).unwrap();
        assert_eq!(g.value(az).item().unwrap(), 0.0);
        let three = vec1(&mut g, &[1.0, 2.0, 3.0]);
        assert!(g.cosine_similarity(a, three, 1e-8).is_err());
    }

    #[test]
    fn mse_cases() {
        let mut g = Graph::new();
        let p = vec1(&mut g, &[0.0, 1.0]);
        let t = vec1(&mut g, &[1.0, 1.0]);
        let l = g.mse_loss(p, t).unwrap();
        assert_eq!(g.value(l).item(), Some(0.5));
        let l = g.mse_loss(t, t).unwrap();
        assert_eq!(g.value(l).item(), Some(0.0));
        let p1 = vec1(&mut g, &[0.0]);
        let t1 = vec1(&mut g, &[1.0]);
        let l = g.mse_loss(p1, t1).unwrap();
        assert_eq!(g.value(l).item(), Some(1.0));
    }

    #[test]
    fn mean_last_pools_time() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let y = g.mean_last(x).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2]);
        assert_eq!(g.value(y).data(), &[2.0, 5.0]);
    }
}
