#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srci::DataMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    DataMatrix::from_fn(n, p, |_, _| r.sample(StandardNormal))
}

/// Draws from the Marchenko–Pastur law by rejection in `t`, where
/// `λ = a + (b − a) sin²t` on `[0, π/2]`.
pub fn mp_samples(gamma: f64, count: usize, seed: u64) -> Vec<f64> {
    let a = (1.0 - gamma.sqrt()).powi(2);
    let b = (1.0 + gamma.sqrt()).powi(2);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let lambda = |t: f64| a + (b - a) * t.sin().powi(2);
    let g = |t: f64| (b - a).powi(2) * (2.0 * t).sin().powi(2) / (4.0 * std::f64::consts::PI * gamma * lambda(t));
    let bound = 1.05 * (0..=20_000).map(|i| g(half_pi * i as f64 / 20_000.0)).fold(0.0, f64::max);
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = r.random::<f64>() * half_pi;
        if r.random::<f64>() * bound <= g(t) {
            out.push(lambda(t));
        }
    }
    out
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
