//! Tape of recorded operations and the reverse sweep over it.
//!
//! Nodes are appended in execution order, so the node vector is already a
//! topological order and `backward` walks it once in reverse.

use super::tensor::{Real, Tensor};
use super::{conv, misc, norm, pool};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Train mode uses batch statistics and live dropout; eval mode is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) enum Op<F> {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<F>,
        inv_std: Vec<F>,
        train: bool,
    },
    LeakyRelu {
        input: Var,
        alpha: F,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<F>,
    },
    Cosine {
        a: Var,
        b: Var,
        saved: misc::CosineSaved<F>,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    MeanLast {
        input: Var,
    },
    AdaptiveAvgPool2d {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Reshape {
        input: Var,
    },
}

pub(crate) struct Node<F> {
    pub(crate) value: Tensor<F>,
    pub(crate) op: Op<F>,
    pub(crate) requires_grad: bool,
}

/// A single forward/backward computation. Build one per mini-batch and drop it afterwards.
pub struct Graph<F> {
    pub(crate) nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    bound: Vec<Var>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            bound: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. Leaves with `requires_grad` receive a gradient after [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    /// Adds every parameter of `store` as a trainable leaf, in store order.
    pub fn bind(&mut self, store: &super::ParamStore<F>) -> Vec<Var> {
        let vars: Vec<Var> = store
            .params()
            .iter()
            .map(|p| self.leaf(p.value.clone(), true))
            .collect();
        self.bound = vars.clone();
        vars
    }

    pub(crate) fn bound(&self) -> &[Var] {
        &self.bound
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`; `None` for nodes that
    /// do not require a gradient.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Reverse sweep from a one-element `loss`. Every trainable leaf ends up with a
    /// populated gradient, zero when it does not influence the loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let value = &self.nodes[loss.0].value;
        if value.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                value.shape()
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            self.grads[loss.0] = Some(vec![F::one()]);
            for i in (0..=loss.0).rev() {
                let Some(gout) = self.grads[i].take() else {
                    continue;
                };
                propagate(&self.nodes, &mut self.grads, i, &gout);
                self.grads[i] = Some(gout);
            }
        }
        for (node, grad) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grad.is_none() {
                *grad = Some(vec![F::zero(); node.value.len()]);
            }
        }
        Ok(())
    }
}

/// Mutable gradient buffer for `v`, allocated on first use; `None` if `v` needs no gradient.
pub(crate) fn slot<'a, F: Real>(
    nodes: &[Node<F>],
    grads: &'a mut [Option<Vec<F>>],
    v: Var,
) -> Option<&'a mut [F]> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); node.value.len()]))
}

fn propagate<F: Real>(nodes: &[Node<F>], grads: &mut [Option<Vec<F>>], i: usize, gout: &[F]) {
    let val = |v: Var| &nodes[v.0].value;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Conv1d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => {
            let (x, w) = (val(*input), val(*weight));
            if let Some(gx) = slot(nodes, grads, *input) {
                conv::conv1d_grad_input(x.shape(), w, gout, *stride, *padding, gx);
            }
            if let Some(gw) = slot(nodes, grads, *weight) {
                conv::conv1d_grad_weight(x, w.shape(), gout, *stride, *padding, gw);
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                let out = nodes[i].value.shape();
                conv::grad_bias(gout, w.shape()[0], out[out.len() - 1], gb);
            }
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => {
            let (x, w) = (val(*input), val(*weight));
            if let Some(gx) = slot(nodes, grads, *input) {
                conv::conv2d_grad_input(x.shape(), w, gout, *stride, *padding, gx);
            }
            if let Some(gw) = slot(nodes, grads, *weight) {
                conv::conv2d_grad_weight(x, w.shape(), gout, *stride, *padding, gw);
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                let out = nodes[i].value.shape();
                let spatial = out[out.len() - 2] * out[out.len() - 1];
                conv::grad_bias(gout, w.shape()[0], spatial, gb);
            }
        }
        Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            train,
        } => {
            let shape = val(*input).shape();
            let g = val(*gamma).data();
            if let Some(gx) = slot(nodes, grads, *input) {
                norm::batchnorm_grad_input(shape, g, xhat, inv_std, *train, gout, gx);
            }
            if let Some(gg) = slot(nodes, grads, *gamma) {
                norm::batchnorm_grad_gamma(shape, xhat, gout, gg);
            }
            if let Some(gb) = slot(nodes, grads, *beta) {
                norm::batchnorm_grad_beta(shape, gout, gb);
            }
        }
        Op::LeakyRelu { input, alpha } => {
            let x = val(*input).data();
            if let Some(gx) = slot(nodes, grads, *input) {
                for ((g, &xv), &go) in gx.iter_mut().zip(x).zip(gout) {
                    *g += if xv > F::zero() { go } else { *alpha * go };
                }
            }
        }
        Op::MaxPool2d { input, argmax } => {
            if let Some(gx) = slot(nodes, grads, *input) {
                for (&src, &go) in argmax.iter().zip(gout) {
                    gx[src] += go;
                }
            }
        }
        Op::Linear { input, weight, bias } => {
            let (x, w) = (val(*input), val(*weight));
            if let Some(gx) = slot(nodes, grads, *input) {
                misc::linear_grad_input(w, gout, gx);
            }
            if let Some(gw) = slot(nodes, grads, *weight) {
                misc::linear_grad_weight(x, w.shape(), gout, gw);
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                let f_out = w.shape()[0];
                for (k, &go) in gout.iter().enumerate() {
                    gb[k % f_out] += go;
                }
            }
        }
        Op::Dropout { input, mask } => {
            if let Some(gx) = slot(nodes, grads, *input) {
                for ((g, &m), &go) in gx.iter_mut().zip(mask).zip(gout) {
                    *g += m * go;
                }
            }
        }
        Op::Cosine { a, b, saved } => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            if let Some(ga) = slot(nodes, grads, *a) {
                misc::cosine_grad(
                    av,
                    bv,
                    &saved.norm_a,
                    &saved.norm_b,
                    &saved.active_a,
                    saved,
                    gout,
                    ga,
                );
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                misc::cosine_grad(
                    bv,
                    av,
                    &saved.norm_b,
                    &saved.norm_a,
                    &saved.active_b,
                    saved,
                    gout,
                    gb,
                );
            }
        }
        Op::Mse { pred, target } => {
            let (p, t) = (val(*pred).data(), val(*target).data());
            let scale = F::lit(2.0) * gout[0] / F::lit(p.len() as f64);
            if let Some(gp) = slot(nodes, grads, *pred) {
                for ((g, &pv), &tv) in gp.iter_mut().zip(p).zip(t) {
                    *g += scale * (pv - tv);
                }
            }
            if let Some(gt) = slot(nodes, grads, *target) {
                for ((g, &pv), &tv) in gt.iter_mut().zip(p).zip(t) {
                    *g -= scale * (pv - tv);
                }
            }
        }
        Op::MeanLast { input } => {
            let shape = val(*input).shape();
            let len = *shape.last().expect("rank >= 1");
            if let Some(gx) = slot(nodes, grads, *input) {
                let inv = F::one() / F::lit(len as f64);
                for (row, &go) in gx.chunks_mut(len).zip(gout) {
                    let g = go * inv;
                    row.iter_mut().for_each(|v| *v += g);
                }
            }
        }
        Op::AdaptiveAvgPool2d { input } => {
            let x_shape = val(*input).shape();
            let out_shape = nodes[i].value.shape();
            if let Some(gx) = slot(nodes, grads, *input) {
                pool::adaptive_avg_pool2d_grad(x_shape, out_shape, gout, gx);
            }
        }
        Op::Add { a, b } => {
            for v in [*a, *b] {
                if let Some(gx) = slot(nodes, grads, v) {
                    gx.iter_mut().zip(gout).for_each(|(g, &go)| *g += go);
                }
            }
        }
        Op::Reshape { input } => {
            if let Some(gx) = slot(nodes, grads, *input) {
                gx.iter_mut().zip(gout).for_each(|(g, &go)| *g += go);
            }
        }
    }
}
