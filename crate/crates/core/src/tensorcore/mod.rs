//! Minimal reverse-mode automatic differentiation over dense tensors, with exactly
//! the layers the assessment models need.

pub mod checkpoint;
pub mod conv;
mod graph;
pub mod misc;
pub mod norm;
mod params;
pub mod pool;
mod tensor;

pub use graph::{Graph, Mode, Var};
pub use misc::LEAKY_SLOPE;
pub use norm::{RunningStats, BN_EPS, BN_MOMENTUM};
pub use params::{sgd_step, Buffer, BufferId, Param, ParamId, ParamStore};
pub use tensor::{DType, Real, Tensor};
