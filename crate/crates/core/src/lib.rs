//! Score-informed music performance assessment.
//!
//! The crate covers the whole pipeline: pitch-contour and score preprocessing
//! ([`signal`]), DTW alignment ([`align`]), a small reverse-mode autodiff engine
//! ([`tensorcore`]), the assessment networks ([`models`]), a synthetic dataset
//! generator with known ratings ([`data`]) and the training/evaluation harness
//! ([`trainer`]).

pub mod align;
pub mod data;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod models;
pub mod signal;
pub mod tensorcore;
pub mod trainer;

pub use data::{Band, Criterion, Dataset, DatasetSplit, DegradationParams};
pub use error::{Error, Result};
pub use manifest::Manifest;
pub use models::{Model, ModelKind, ModelSpec};
pub use signal::{DistanceMatrix, Note, PitchContour, Score};
