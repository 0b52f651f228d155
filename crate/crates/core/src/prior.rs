//! Seeded random streams and the prior samplers shared by the Gibbs
//! sampler and the signal-to-noise tuner.
//!
//! Stream splitting: every consumer derives its generator as
//! `ChaCha8Rng::seed_from_u64(seed)` followed by `set_stream(stream)`.
//! The baseline chain uses stream [`CHAIN_STREAM`]; the tuner uses stream
//! `TUNER_STREAM_BASE + draw_index` for each Monte Carlo draw; simulation
//! generators use their own fixed stream ids. Streams of one seed are
//! independent ChaCha keystreams, so adding consumers never perturbs
//! existing ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::model::Hyperparams;

pub type StreamRng = ChaCha8Rng;

pub const CHAIN_STREAM: u64 = 0;
pub const TUNER_STREAM_BASE: u64 = 1 << 32;
pub const SIM_X_STREAM: u64 = 1 << 40;
pub const SIM_Y_STREAM: u64 = (1 << 40) + 1;

/// Floor applied to sampled variances.
pub const VARIANCE_FLOOR: f64 = 1e-300;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on `(0, 1]`.
#[inline]
pub(crate) fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[inline]
pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `ln G` for `G ~ Gamma(shape, 1)`, stable for shapes far below 1.
pub fn ln_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        // G(shape) = G(shape + 1) * U^(1/shape)
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape > 0").sample(rng);
        g.ln() + open_uniform(rng).ln() / shape
    } else {
        let g: f64 = Gamma::new(shape, 1.0).expect("shape > 0").sample(rng);
        g.ln()
    }
}

/// Draws from `Dir(concentration)` through normalized log-gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: &[f64]) -> Vec<f64> {
    let mut logs: Vec<f64> = concentration.iter().map(|&a| ln_gamma_variate(rng, a)).collect();
    crate::special::normalize_log_masses(&mut logs);
    // Renormalize so the simplex holds to rounding.
    let s: f64 = logs.iter().sum();
    logs.iter_mut().for_each(|w| *w /= s);
    logs
}

/// Draws from `IGa(shape, rate)`, floored at [`VARIANCE_FLOOR`].
pub fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let ln_var = rate.ln() - ln_gamma_variate(rng, shape);
    ln_var.exp().max(VARIANCE_FLOOR)
}

/// `(μ, σ²)` from the base prior `N(μ | μ0, qσ²) IGa(σ² | a, b)`.
pub fn sample_base_component<R: Rng + ?Sized>(rng: &mut R, hp: &Hyperparams) -> (f64, f64) {
    let var = sample_inv_gamma(rng, hp.a, hp.b);
    let mean = hp.mu0 + (hp.q * var).sqrt() * standard_normal(rng);
    (mean, var)
}

/// Level-specific kernel shape and rate `(τσ/σ⁴, τσ/σ²)` around a baseline variance.
#[inline]
pub fn level_variance_prior(tau_sigma: f64, baseline_var: f64) -> (f64, f64) {
    (tau_sigma / (baseline_var * baseline_var), tau_sigma / baseline_var)
}

/// `(μ, σ²)` from the level prior
/// `N(μ | μ_h, σ²/τμ) IGa(σ² | τσ/σ_h⁴, τσ/σ_h²)` centered on a baseline component.
pub fn sample_level_component<R: Rng + ?Sized>(
    rng: &mut R,
    hp: &Hyperparams,
    baseline_mean: f64,
    baseline_var: f64,
) -> (f64, f64) {
    let (shape, rate) = level_variance_prior(hp.tau_sigma, baseline_var);
    let var = sample_inv_gamma(rng, shape, rate);
    let mean = baseline_mean + (var / hp.tau_mu).sqrt() * standard_normal(rng);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, 0).random()).collect();
        let mut r = stream_rng(7, 0);
        let b: Vec<u64> = (0..4).map(|_| r.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut r1 = stream_rng(7, 1);
        let c: u64 = r1.random();
        assert_ne!(b[0], c);
    }

    #[test]
    fn tiny_shape_dirichlet_is_a_simplex() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let w = sample_dirichlet(&mut rng, &[1e-9, 1e-9, 2.0]);
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn gamma_log_variate_mean() {
        // E[G] = shape for both branches.
        let mut rng = stream_rng(3, 0);
        for &shape in &[0.3, 4.0] {
            let m = 200_000;
            let mean: f64 = (0..m).map(|_| ln_gamma_variate(&mut rng, shape).exp()).sum::<f64>() / m as f64;
            let se = (shape / m as f64).sqrt();
            assert!((mean - shape).abs() < 4.0 * se, "shape {shape}: {mean}");
        }
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = stream_rng(11, 0);
        let (shape, rate) = (6.0, 2.5);
        let m = 200_000;
        let draws: Vec<f64> = (0..m).map(|_| sample_inv_gamma(&mut rng, shape, rate)).collect();
        let mean = draws.iter().sum::<f64>() / m as f64;
        let want = rate / (shape - 1.0);
        let var = rate * rate / ((shape - 1.0).powi(2) * (shape - 2.0));
        assert!((mean - want).abs() < 4.0 * (var / m as f64).sqrt());
    }
}
