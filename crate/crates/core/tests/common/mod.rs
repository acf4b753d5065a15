//! Finite-difference and brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use mpa_core::align::{dtw_align, WarpPath};
use mpa_core::data::Criterion;
use mpa_core::models::ModelKind;
use mpa_core::tensorcore::{Graph, Mode, RunningStats, Tensor, Var, BN_EPS, BN_MOMENTUM, LEAKY_SLOPE};
use mpa_core::{Model, ModelSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step for f64 checks.
pub const FD_STEP: f64 = 1e-5;
/// Relative error bound for gradient checks.
pub const GRAD_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Builds `op` over trainable leaves holding `inputs`, reduces its output with fixed
/// random weights to a scalar, and compares every input coordinate's gradient with a
/// central difference. Returns the worst relative error.
pub fn check_op<F>(inputs: &[Tensor<f64>], seed: u64, op: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>], grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let y = op(&mut g, &vars);
        let mut r = rng(seed);
        let w = Tensor::from_fn(g.value(y).shape().to_vec(), |_| r.gen_range(-1.0..1.0));
        let wv = g.constant(w.clone());
        // sum(w * y) through a linear layer with a single output
        let flat_y = g.reshape(y, vec![1, w.len()]).unwrap();
        let wrow = g.reshape(wv, vec![1, w.len()]).unwrap();
        let zero = g.constant(Tensor::zeros([1]));
        let loss = g.linear(flat_y, wrow, zero).unwrap();
        let loss = g.reshape(loss, vec![]).unwrap();
        let value = g.value(loss).data()[0];
        if !grads {
            return (value, Vec::new());
        }
        g.backward(loss).unwrap();
        (value, vars.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect())
    };
    let (_, grads) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        for i in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[k][i], numeric));
        }
    }
    worst
}

/// Train-mode MSE of `model` on `inputs` against `targets`. Dropout masks come from
/// `mask_seed`, so repeated calls see the same masks.
pub fn model_loss(
    model: &Model<f64>,
    inputs: &[Tensor<f64>],
    targets: &Tensor<f64>,
    mask_seed: u64,
) -> (f64, Vec<Vec<f64>>) {
    let mut m = model.clone();
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let y = m
        .forward(&mut g, &vars, Mode::Train, &mut rng(mask_seed))
        .unwrap();
    let t = g.constant(targets.clone());
    let loss = g.mse_loss(y, t).unwrap();
    g.backward(loss).unwrap();
    let store = m.store_mut();
    store.zero_grad();
    store.accumulate_grads(&g).unwrap();
    let grads = store.params().iter().map(|p| p.grad.clone()).collect();
    (g.value(loss).data()[0], grads)
}

/// Steps tried in turn for whole-model checks. A bracket that straddles one of
/// the thousands of ReLU kinks measures a chord, not the derivative, so the step
/// shrinks until two successive estimates agree.
pub const MODEL_STEPS: [f64; 4] = [1e-5, 1e-6, 1e-7, 1e-8];

/// Per parameter tensor, the derivative along a random direction against its
/// central difference. Returns `(parameter name, relative error)` pairs.
pub fn check_model(
    model: &Model<f64>,
    inputs: &[Tensor<f64>],
    targets: &Tensor<f64>,
    seed: u64,
) -> Vec<(String, f64)> {
    let (_, grads) = model_loss(model, inputs, targets, seed);
    let mut r = rng(seed ^ 0x5eed);
    let mut out = Vec::new();
    for (k, p) in model.store().params().iter().enumerate() {
        let dir: Vec<f64> = (0..p.value.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let analytic: f64 = grads[k].iter().zip(&dir).map(|(a, b)| a * b).sum();
        let numeric_at = |h: f64| {
            let shifted = |sign: f64| {
                let mut m = model.clone();
                let v = m.store_mut().params_mut()[k].value.data_mut();
                v.iter_mut().zip(&dir).for_each(|(x, d)| *x += sign * h * d);
                model_loss(&m, inputs, targets, seed).0
            };
            (shifted(1.0) - shifted(-1.0)) / (2.0 * h)
        };
        let estimates: Vec<f64> = MODEL_STEPS.iter().map(|&h| numeric_at(h)).collect();
        let numeric = estimates
            .windows(2)
            .find(|w| rel_err(w[0], w[1]) < GRAD_TOL)
            .map_or(estimates[0], |w| w[0]);
        out.push((p.name.clone(), rel_err(analytic, numeric)));
    }
    out
}

/// Direct summation `out[b][o][t] = bias[o] + sum_c sum_k w[o][c][k] * x[b][c][t*stride + k - pad]`.
pub fn conv1d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let (bn, ci, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let lo = (l + 2 * pad - k) / stride + 1;
    let mut out = Vec::new();
    for bi in 0..bn {
        for o in 0..co {
            for t in 0..lo {
                let mut s = b.data()[o];
                for c in 0..ci {
                    for kk in 0..k {
                        let pos = (t * stride + kk) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < l {
                            s += w.data()[(o * ci + c) * k + kk] * x.data()[(bi * ci + c) * l + pos as usize];
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    out
}

/// Direct summation for a square-kernel 2-D convolution over `[B, C, H, W]`.
pub fn conv2d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let (bn, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Vec::new();
    for bi in 0..bn {
        for o in 0..co {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut s = b.data()[o];
                    for c in 0..ci {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = (y * stride + dy) as isize - pad as isize;
                                let ix = (xx * stride + dx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    s += w.data()[((o * ci + c) * kh + dy) * kw + dx]
                                        * x.data()[((bi * ci + c) * h + iy as usize) * wd + ix as usize];
                                }
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Every monotone path from (0,0) to the far corner with absolute-difference cost,
/// summed in path order. Returns the minimum and all paths achieving it.
pub fn dtw_brute_force(a: &[f64], b: &[f64]) -> (f64, Vec<Vec<(usize, usize)>>) {
    fn walk(
        a: &[f64],
        b: &[f64],
        at: (usize, usize),
        acc: f64,
        path: &mut Vec<(usize, usize)>,
        best: &mut (f64, Vec<Vec<(usize, usize)>>),
    ) {
        let acc = acc + (a[at.0] - b[at.1]).abs();
        path.push(at);
        if at == (a.len() - 1, b.len() - 1) {
            if acc < best.0 {
                *best = (acc, vec![path.clone()]);
            } else if acc == best.0 {
                best.1.push(path.clone());
            }
        } else {
            for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
                if at.0 + di < a.len() && at.1 + dj < b.len() {
                    walk(a, b, (at.0 + di, at.1 + dj), acc, path, best);
                }
            }
        }
        path.pop();
    }
    let mut best = (f64::INFINITY, Vec::new());
    walk(a, b, (0, 0), 0.0, &mut Vec::new(), &mut best);
    best
}

/// Uniform values in `[-1, -0.1] U [0.1, 1]`, clear of the ReLU kink.
pub fn off_kink<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen() {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced well beyond the difference step, in random order, so
/// window maxima never tie.
pub fn distinct<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    vals.shuffle(rng);
    Tensor::new(shape.to_vec(), vals).unwrap()
}

pub const OP_NAMES: [&str; 15] = [
    "conv1d",
    "conv2d",
    "relu",
    "leaky_relu",
    "linear",
    "dropout",
    "cosine_similarity",
    "mse_loss",
    "mean_last",
    "add",
    "reshape",
    "batchnorm1d_train",
    "batchnorm1d_eval",
    "maxpool2d",
    "adaptive_avg_pool2d",
];

/// Worst relative gradient error of op `name` on random instance `i`.
pub fn op_instance(name: &str, i: u64) -> f64 {
    let mut r = rng(1000 + i);
    let b = r.gen_range(1..=3);
    match name {
        "conv1d" => {
            let (ci, co, k) = (r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(1..=5));
            let stride = r.gen_range(1..=3);
            let pad = r.gen_range(0..=k / 2);
            let l = r.gen_range(k..=12);
            let x = random_tensor(&[b, ci, l], &mut r);
            let w = random_tensor(&[co, ci, k], &mut r);
            let bias = random_tensor(&[co], &mut r);
            check_op(&[x, w, bias], i, |g, v| {
                g.conv1d(v[0], v[1], v[2], stride, pad).unwrap()
            })
        }
        "conv2d" => {
            let (ci, co) = (r.gen_range(1..=2), r.gen_range(1..=3));
            let k = [1, 3][r.gen_range(0..2)];
            // half the instances take the 3x3 / stride 1 / padding 1 path
            let (stride, pad) = if i % 2 == 0 {
                (1, k / 2)
            } else {
                (r.gen_range(1..=2), r.gen_range(0..=k / 2))
            };
            let (h, w) = (r.gen_range(k..=6), r.gen_range(k..=6));
            let x = random_tensor(&[b, ci, h, w], &mut r);
            let wt = random_tensor(&[co, ci, k, k], &mut r);
            let bias = random_tensor(&[co], &mut r);
            check_op(&[x, wt, bias], i, |g, v| {
                g.conv2d(v[0], v[1], v[2], stride, pad).unwrap()
            })
        }
        "relu" => {
            let x = off_kink(&[b, 7], &mut r);
            check_op(&[x], i, |g, v| g.relu(v[0]).unwrap())
        }
        "leaky_relu" => {
            let x = off_kink(&[b, 7], &mut r);
            check_op(&[x], i, |g, v| g.leaky_relu(v[0], LEAKY_SLOPE).unwrap())
        }
        "linear" => {
            let (fi, fo) = (r.gen_range(1..=6), r.gen_range(1..=4));
            let x = random_tensor(&[b, fi], &mut r);
            let w = random_tensor(&[fo, fi], &mut r);
            let bias = random_tensor(&[fo], &mut r);
            check_op(&[x, w, bias], i, |g, v| g.linear(v[0], v[1], v[2]).unwrap())
        }
        "dropout" => {
            let x = random_tensor(&[b, 3, 5], &mut r);
            check_op(&[x], i, |g, v| {
                g.dropout(v[0], 0.2, Mode::Train, &mut rng(i)).unwrap()
            })
        }
        "cosine_similarity" => {
            let d = r.gen_range(2..=8);
            let a = random_tensor(&[b, d], &mut r);
            let c = random_tensor(&[b, d], &mut r);
            check_op(&[a, c], i, |g, v| g.cosine_similarity(v[0], v[1], 1e-8).unwrap())
        }
        "mse_loss" => {
            let p = random_tensor(&[b + 1], &mut r);
            let t = random_tensor(&[b + 1], &mut r);
            check_op(&[p, t], i, |g, v| {
                let l = g.mse_loss(v[0], v[1]).unwrap();
                g.reshape(l, vec![1]).unwrap()
            })
        }
        "mean_last" => {
            let x = random_tensor(&[b, 3, r.gen_range(1..=9)], &mut r);
            check_op(&[x], i, |g, v| g.mean_last(v[0]).unwrap())
        }
        "add" => {
            let x = random_tensor(&[b, 4], &mut r);
            let y = random_tensor(&[b, 4], &mut r);
            check_op(&[x, y], i, |g, v| g.add(v[0], v[1]).unwrap())
        }
        "reshape" => {
            let x = random_tensor(&[b, 2, 6], &mut r);
            check_op(&[x], i, |g, v| g.reshape(v[0], vec![b * 3, 4]).unwrap())
        }
        "batchnorm1d_train" | "batchnorm1d_eval" => {
            let c = r.gen_range(1..=3);
            let x = random_tensor(&[b + 1, c, r.gen_range(2..=6)], &mut r);
            let gamma = random_tensor(&[c], &mut r);
            let beta = random_tensor(&[c], &mut r);
            let mode = if name.ends_with("train") {
                Mode::Train
            } else {
                Mode::Eval
            };
            let mean0: Vec<f64> = (0..c).map(|_| r.gen_range(-0.5..0.5)).collect();
            let var0: Vec<f64> = (0..c).map(|_| r.gen_range(0.5..2.0)).collect();
            check_op(&[x, gamma, beta], i, |g, v| {
                let (mut mean, mut var) = (mean0.clone(), var0.clone());
                let stats = RunningStats {
                    mean: &mut mean,
                    var: &mut var,
                };
                g.batchnorm1d(v[0], v[1], v[2], stats, mode, BN_EPS, BN_MOMENTUM)
                    .unwrap()
            })
        }
        "maxpool2d" => {
            let (h, w) = (r.gen_range(3..=9), r.gen_range(3..=9));
            let x = distinct(&[b, 2, h, w], &mut r);
            check_op(&[x], i, |g, v| g.maxpool2d(v[0], 3).unwrap())
        }
        "adaptive_avg_pool2d" => {
            let (h, w) = (r.gen_range(1..=8), r.gen_range(1..=8));
            let (oh, ow) = (r.gen_range(1..=6), r.gen_range(1..=6));
            let x = random_tensor(&[b, 2, h, w], &mut r);
            check_op(&[x], i, |g, v| g.adaptive_avg_pool2d(v[0], oh, ow).unwrap())
        }
        other => panic!("no gradient case for {other}"),
    }
}

/// Small specs for whole-model checks: 5 s chunks, 16x16 matrices.
pub fn small_spec(kind: ModelKind, seed: u64) -> ModelSpec {
    match kind {
        ModelKind::DistMat => ModelSpec::dist_mat(16, Criterion::NoteAccuracy, seed),
        k => ModelSpec::chunked(k, 5.0, Criterion::NoteAccuracy, seed),
    }
}

/// Random inputs of the right shapes for `spec`, values in `[0, 1]`.
pub fn model_inputs(spec: &ModelSpec, batch: usize, seed: u64) -> Vec<Tensor<f64>> {
    let mut r = rng(seed);
    let mut t = |shape: &[usize]| Tensor::from_fn(shape.to_vec(), |_| r.gen_range(0.0..1.0));
    match spec.kind {
        ModelKind::DistMat => {
            let s = spec.matrix_resolution.unwrap();
            vec![t(&[batch, 1, s, s])]
        }
        ModelKind::SiConvNet => vec![t(&[batch, 2, spec.chunk_frames().unwrap()])],
        ModelKind::PcBaseline => vec![t(&[batch, 1, spec.chunk_frames().unwrap()])],
        ModelKind::JointEmbed => {
            let n = spec.chunk_frames().unwrap();
            vec![t(&[batch, 1, n]), t(&[batch, 1, n])]
        }
    }
}

/// Worst directional-derivative error over all parameter tensors of one random model.
pub fn model_instance(kind: ModelKind, i: u64) -> (String, f64) {
    let spec = small_spec(kind, i);
    let model = Model::<f64>::build(&spec).unwrap();
    let inputs = model_inputs(&spec, 3, 77 + i);
    let mut r = rng(99 + i);
    let targets = Tensor::from_fn(vec![3], |_| r.gen_range(0.0..1.0));
    check_model(&model, &inputs, &targets, i)
        .into_iter()
        .fold(
            (String::new(), 0.0),
            |best, (n, e)| if e > best.1 { (n, e) } else { best },
        )
}

/// Small integers keep every partial sum exact, so any summation order agrees.
pub fn integer_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-4..=4) as f64)
}

pub fn conv1d_case(i: u64, int: bool) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(i);
    let (b, ci, co, k): (usize, usize, usize, usize) = (
        r.gen_range(1..=3),
        r.gen_range(1..=3),
        r.gen_range(1..=4),
        r.gen_range(1..=7),
    );
    let stride = r.gen_range(1..=3);
    let pad = r.gen_range(0..=k / 2);
    let l = r.gen_range(k.saturating_sub(2 * pad).max(1)..=20);
    let mut make = |s: &[usize]| {
        if int {
            integer_tensor(s, &mut r)
        } else {
            random_tensor(s, &mut r)
        }
    };
    let (x, w, bias) = (make(&[b, ci, l]), make(&[co, ci, k]), make(&[co]));
    let mut g = Graph::new();
    let (xv, wv, bv) = (
        g.constant(x.clone()),
        g.constant(w.clone()),
        g.constant(bias.clone()),
    );
    let y = g.conv1d(xv, wv, bv, stride, pad).unwrap();
    (
        g.value(y).data().to_vec(),
        conv1d_oracle(&x, &w, &bias, stride, pad),
    )
}

pub fn conv2d_case(i: u64, int: bool) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(10_000 + i);
    let (b, ci, co) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=4));
    let k: usize = r.gen_range(1..=3);
    let (stride, pad) = if i % 3 == 0 {
        (1, k / 2)
    } else {
        (r.gen_range(1..=2), r.gen_range(0..=k / 2))
    };
    let lo = k.saturating_sub(2 * pad).max(1);
    let (h, wd) = (r.gen_range(lo..=9), r.gen_range(lo..=9));
    let mut make = |s: &[usize]| {
        if int {
            integer_tensor(s, &mut r)
        } else {
            random_tensor(s, &mut r)
        }
    };
    let (x, w, bias) = (make(&[b, ci, h, wd]), make(&[co, ci, k, k]), make(&[co]));
    let mut g = Graph::new();
    let (xv, wv, bv) = (
        g.constant(x.clone()),
        g.constant(w.clone()),
        g.constant(bias.clone()),
    );
    let y = g.conv2d(xv, wv, bv, stride, pad).unwrap();
    (
        g.value(y).data().to_vec(),
        conv2d_oracle(&x, &w, &bias, stride, pad),
    )
}

/// A random DTW problem with L, T <= 8, its computed path, and the brute-force
/// optimum with every path achieving it.
pub fn dtw_case(i: u64) -> (WarpPath, f64, Vec<Vec<(usize, usize)>>) {
    let mut r = rng(20_000 + i);
    let (l, t) = (r.gen_range(1..=8), r.gen_range(1..=8));
    // coarse values make exact cost ties common, which exercises the tie-break
    let a: Vec<f64> = (0..l)
        .map(|_| r.gen_range(0..5) as f64 + if i % 2 == 0 { r.gen::<f64>() } else { 0.0 })
        .collect();
    let b: Vec<f64> = (0..t)
        .map(|_| r.gen_range(0..5) as f64 + if i % 2 == 0 { r.gen::<f64>() } else { 0.0 })
        .collect();
    let path = dtw_align(&a, &b).unwrap();
    let (best, optimal) = dtw_brute_force(&a, &b);
    (path, best, optimal)
}
