//! Default hyperparameters and the prior signal-to-noise check.
//!
//! The signal is the expected squared L2 distance between the marginal
//! density of `y` and its conditional density given one predictor level;
//! the noise is the expected distance between the marginal density and the
//! prior density of the component means. Both are computed exactly per
//! prior draw through `∫ N(t|μ1,v1) N(t|μ2,v2) dt = N(μ1 − μ2 | 0, v1 + v2)`
//! and averaged by Monte Carlo.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ln_normal, validate_components, Hyperparams};
use crate::prior::{sample_base_component, sample_dirichlet, sample_level_component, stream_rng, TUNER_STREAM_BASE};

pub const DEFAULT_MC_DRAWS: usize = 5000;

/// Default specification for `k` components.
pub fn default_hyperparams(k: usize) -> Hyperparams {
    let kf = k as f64;
    Hyperparams {
        kappa: [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0],
        tau_omega: kf.powf(1.5) + 8.0 * (kf - 1.0),
        tau_mu: 50.0,
        tau_sigma: 50.0,
        mu0: 0.0,
        q: 50.0,
        a: 2.0,
        b: 0.02,
        alpha: kf,
        k,
    }
}

/// `∫ N(t|μ1,v1) N(t|μ2,v2) dt`.
pub fn gauss_l2_inner(mu1: f64, var1: f64, mu2: f64, var2: f64) -> Result<f64> {
    if !(var1 > 0.0 && var2 > 0.0) {
        return Err(Error::invalid(format!("variances must be > 0, got {var1}, {var2}")));
    }
    Ok(ln_normal(mu1 - mu2, 0.0, var1 + var2).exp())
}

/// Weights, means and variances of a univariate Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        validate_components(&weights, &means, &variances)?;
        Ok(Mixture {
            weights,
            means,
            variances,
        })
    }

    pub fn density(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| w * ln_normal(t, *m, *v).exp())
            .sum()
    }
}

fn cross(a: &Mixture, b: &Mixture) -> f64 {
    let mut s = 0.0;
    for h in 0..a.weights.len() {
        for t in 0..b.weights.len() {
            s += a.weights[h]
                * b.weights[t]
                * ln_normal(a.means[h] - b.means[t], 0.0, a.variances[h] + b.variances[t]).exp();
        }
    }
    s
}

/// `‖f_A − f_B‖₂²`, clamped at zero against rounding.
pub fn mixture_l2_sq(a: &Mixture, b: &Mixture) -> f64 {
    (cross(a, a) + cross(b, b) - 2.0 * cross(a, b)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrEstimate {
    /// Mean squared distance between the marginal density and the prior density of the means.
    pub delta0: f64,
    /// Mean squared distance between the marginal and one level-conditional density.
    pub delta1: f64,
    pub ratio: f64,
    pub mc_draws: usize,
    /// Delta-method standard error of `ratio`.
    pub mc_stderr_ratio: f64,
}

/// Squared distances `(noise, signal)` for one prior draw on stream
/// `TUNER_STREAM_BASE + index`.
pub fn snr_draw(hp: &Hyperparams, seed: u64, index: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, TUNER_STREAM_BASE + index);
    let k = hp.k;
    let weights = sample_dirichlet(&mut rng, &vec![hp.alpha / k as f64; k]);
    let (means, variances): (Vec<f64>, Vec<f64>) = (0..k).map(|_| sample_base_component(&mut rng, hp)).unzip();
    let concentration: Vec<f64> = weights.iter().map(|w| hp.tau_omega * w).collect();
    let level_weights = sample_dirichlet(&mut rng, &concentration);
    let (level_means, level_vars): (Vec<f64>, Vec<f64>) = (0..k)
        .map(|h| sample_level_component(&mut rng, hp, means[h], variances[h]))
        .unzip();

    let baseline = Mixture {
        weights: weights.clone(),
        means,
        variances: variances.clone(),
    };
    let mean_prior = Mixture {
        weights,
        means: vec![hp.mu0; k],
        variances: variances.iter().map(|v| hp.q * v).collect(),
    };
    let level = Mixture {
        weights: level_weights,
        means: level_means,
        variances: level_vars,
    };
    (mixture_l2_sq(&baseline, &mean_prior), mixture_l2_sq(&baseline, &level))
}

/// Monte Carlo estimate of the prior signal-to-noise ratio.
pub fn estimate_snr(hp: &Hyperparams, mc_draws: usize, seed: u64) -> Result<SnrEstimate> {
    hp.validate()?;
    if mc_draws == 0 {
        return Err(Error::invalid("mc_draws must be >= 1"));
    }
    let pairs: Vec<(f64, f64)> = (0..mc_draws as u64)
        .into_par_iter()
        .map(|i| snr_draw(hp, seed, i))
        .collect();
    let m = mc_draws as f64;
    let delta0 = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let delta1 = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let ratio = if delta0 > 0.0 { delta1 / delta0 } else { f64::NAN };
    let mc_stderr_ratio = if mc_draws > 1 && delta0 > 0.0 {
        let (mut v0, mut v1, mut c01) = (0.0, 0.0, 0.0);
        for &(a, b) in &pairs {
            v0 += (a - delta0) * (a - delta0);
            v1 += (b - delta1) * (b - delta1);
            c01 += (a - delta0) * (b - delta1);
        }
        let denom = m - 1.0;
        let (v0, v1, c01) = (v0 / denom, v1 / denom, c01 / denom);
        ((v1 - 2.0 * ratio * c01 + ratio * ratio * v0).max(0.0) / (m * delta0 * delta0)).sqrt()
    } else {
        f64::NAN
    };
    Ok(SnrEstimate {
        delta0,
        delta1,
        ratio,
        mc_draws,
        mc_stderr_ratio,
    })
}
