//! Deterministic random number generation.
//!
//! Every run owns a single seeded ChaCha8 generator family. Consumers (the
//! environment, actor sampling, the replay buffer, evaluation, ...) each get
//! their own stream so adding a consumer never perturbs the draws seen by the
//! others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable identifier of the generator; recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Independent RNG stream consumers within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 0,
    Actor = 1,
    Buffer = 2,
    Warmup = 3,
    Eval = 4,
    Bootstrap = 5,
    RollIn = 6,
}

/// Deterministic ChaCha8 generator for one (seed, stream) pair.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Standard-normal draw via Box-Muller; deterministic given the rng state.
pub fn next_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    // gen::<f64>() is in [0, 1); map u1 into (0, 1] so ln() is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    crate::math::sqrt(-2.0 * crate::math::ln(u1)) * crate::math::cos(2.0 * crate::math::PI * u2)
}

/// Fills `out` with standard-normal draws.
pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = next_standard_normal(rng);
    }
}
