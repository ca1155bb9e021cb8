//! Random streams.
//!
//! Every stochastic routine draws from ChaCha8 (`rand_chacha::ChaCha8Rng`).
//! A run seed selects the key through `SeedableRng::seed_from_u64`, and each
//! replica gets its own 64-bit stream id, so replica `r` of seed `s` is the
//! same sequence on every platform and independent of how many replicas run
//! or in which order.
//!
//! Uniforms use the top 53 bits of a `u64`; exponentials use inversion.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type StreamRng = ChaCha8Rng;

/// Recorded in run manifests.
pub const ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64 + set_stream";

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `(0, 1]`.
#[inline]
pub fn uniform_open0<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Exponential with the given rate.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -libm::log(uniform_open0(rng)) / rate
}

/// Bernoulli(`p`).
#[inline]
pub fn bernoulli<R: RngCore + ?Sized>(rng: &mut R, p: f64) -> bool {
    uniform(rng) < p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: [u64; 4] = core::array::from_fn({
            let mut r = stream(7, 3);
            move |_| r.next_u64()
        });
        let b: [u64; 4] = core::array::from_fn({
            let mut r = stream(7, 3);
            move |_| r.next_u64()
        });
        let c: [u64; 4] = core::array::from_fn({
            let mut r = stream(7, 4);
            move |_| r.next_u64()
        });
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_range() {
        let mut r = stream(1, 0);
        for _ in 0..10_000 {
            let u = uniform(&mut r);
            assert!((0.0..1.0).contains(&u));
            let w = uniform_open0(&mut r);
            assert!(w > 0.0 && w <= 1.0);
        }
    }

    #[test]
    fn exponential_mean() {
        let mut r = stream(2, 0);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| exponential(&mut r, 4.0)).sum::<f64>() / n as f64;
        // sd of the mean is 0.25 / sqrt(n)
        assert!((mean - 0.25).abs() < 4.0 * 0.25 / (n as f64).sqrt());
    }
}
