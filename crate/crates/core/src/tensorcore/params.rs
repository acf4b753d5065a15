use rand::Rng;

use super::graph::Graph;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferId(pub(crate) usize);

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Vec<F>,
}

/// Non-trainable state saved with a model, e.g. batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct Buffer<F> {
    pub name: String,
    pub value: Tensor<F>,
}

/// All learned parameters and buffers of a model, addressed by insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
    buffers: Vec<Buffer<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            buffers: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let grad = vec![F::zero(); value.len()];
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let value = Tensor::from_fn(shape, |_| F::lit(rng.gen_range(-bound..bound)));
        self.add(name, value)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<F>) -> BufferId {
        self.buffers.push(Buffer {
            name: name.into(),
            value,
        });
        BufferId(self.buffers.len() - 1)
    }

    pub fn params(&self) -> &[Param<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<F>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<F>] {
        &self.buffers
    }

    pub fn param(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<F> {
        &self.buffers[id.0].value
    }

    /// Two distinct buffers borrowed mutably at once.
    pub fn buffer_pair_mut(&mut self, a: BufferId, b: BufferId) -> (&mut [F], &mut [F]) {
        assert!(a.0 < b.0, "buffer ids must be increasing");
        let (lo, hi) = self.buffers.split_at_mut(b.0);
        (lo[a.0].value.data_mut(), hi[0].value.data_mut())
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = F::zero());
        }
    }

    /// Adds the gradients of the leaves created by the last [`Graph::bind`] of this store.
    pub fn accumulate_grads(&mut self, graph: &Graph<F>) -> Result<()> {
        let bound = graph.bound();
        if bound.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "graph bound {} parameters, store has {}",
                bound.len(),
                self.params.len()
            )));
        }
        for (p, &v) in self.params.iter_mut().zip(bound) {
            if let Some(g) = graph.grad(v) {
                p.grad.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
        }
        Ok(())
    }

    /// L2 norm of each parameter's gradient, in store order.
    pub fn grad_norms(&self) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| {
                p.grad
                    .iter()
                    .map(|g| g.to_f64().unwrap_or(f64::NAN).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Copies values from `other`, which must have the same names and shapes.
    pub fn load_from(&mut self, other: &ParamStore<F>) -> Result<()> {
        fn check<T: Real>(kind: &str, a: (&str, &Tensor<T>), b: (&str, &Tensor<T>)) -> Result<()> {
            if a.0 != b.0 || a.1.shape() != b.1.shape() {
                return Err(Error::Checkpoint(format!(
                    "{kind} mismatch: model has {} {:?}, checkpoint has {} {:?}",
                    a.0,
                    a.1.shape(),
                    b.0,
                    b.1.shape()
                )));
            }
            Ok(())
        }
        if self.params.len() != other.params.len() || self.buffers.len() != other.buffers.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} parameters and {} buffers, checkpoint has {} and {}",
                self.params.len(),
                self.buffers.len(),
                other.params.len(),
                other.buffers.len()
            )));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            check("parameter", (&a.name, &a.value), (&b.name, &b.value))?;
        }
        for (a, b) in self.buffers.iter().zip(&other.buffers) {
            check("buffer", (&a.name, &a.value), (&b.name, &b.value))?;
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.value = b.value.clone();
        }
        for (a, b) in self.buffers.iter_mut().zip(&other.buffers) {
            a.value = b.value.clone();
        }
        Ok(())
    }
}

/// Plain SGD: `p <- p - lr * grad`, then gradients are zeroed.
pub fn sgd_step<F: Real>(store: &mut ParamStore<F>, lr: f64) {
    let lr = F::lit(lr);
    for p in store.params_mut() {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.iter_mut()) {
            *v -= lr * *g;
            *g = F::zero();
        }
    }
}
