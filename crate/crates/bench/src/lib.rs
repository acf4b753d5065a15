//! Fixed inputs shared by the benchmarks.

use mpa_core::data::{generate_score, render_performance, sample_degradation};
use mpa_core::tensorcore::Tensor;
use mpa_core::{Band, PitchContour, Score};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.gen_range(-1.0..1.0))
}

/// A score of `band` and one degraded performance of it.
pub fn recording(band: Band, seed: u64) -> (Score, PitchContour) {
    let mut r = rng(seed);
    let score = generate_score(band, &mut r);
    let d = sample_degradation(band, &mut r);
    let contour = render_performance(&score, &d, &mut r).expect("sampled degradations are valid");
    (score, contour)
}
