//! Seedable counter-based randomness shared by every stochastic op.
//!
//! Draw order inside one training step: batch shuffle (once per epoch), then
//! Gumbel noise for the assignment logits, then dropout masks layer by layer in
//! forward order. Each op documents how many values it consumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type EngineRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> EngineRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in the open interval (0, 1).
pub fn open_unit(rng: &mut EngineRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard Gumbel variate `-ln(-ln U)`.
pub fn standard_gumbel(rng: &mut EngineRng) -> f64 {
    -(-open_unit(rng).ln()).ln()
}

pub fn uniform(rng: &mut EngineRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<f64> = (0..8)
            .map({
                let mut r = seeded(42);
                move |_| r.random()
            })
            .collect();
        let b: Vec<f64> = (0..8)
            .map({
                let mut r = seeded(42);
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn gumbel_mean_is_euler_gamma() {
        let mut r = seeded(1);
        let n = 200_000;
        let mean = (0..n).map(|_| standard_gumbel(&mut r)).sum::<f64>() / n as f64;
        // Var = pi^2/6, so the standard error is about 0.0029.
        assert!((mean - 0.577_215_664_9).abs() < 0.015, "{mean}");
    }
}
