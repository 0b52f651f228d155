//! Closed-form conditional Bayes factors for one predictor given one
//! baseline draw.
//!
//! * `log_bf11`: level-specific weights `ω_j(l) ~ Dir(τω ω)` against the
//!   baseline weights (Dirichlet-multinomial ratio).
//! * `log_bf12`: level-specific kernels under the normal-inverse-gamma
//!   prior centered on each baseline component, against the baseline kernels.
//! * `log_bf13 = log_bf11 + log_bf12`.
//!
//! Empty `(component, level)` cells contribute exactly zero to both.

use crate::error::{Error, Result};
use crate::model::{validate_kappa, HypothesisProbs, Hyperparams, MixtureDraw};
use crate::prior::level_variance_prior;
use crate::special::ln_gamma;

/// Floor applied to baseline weights before they enter `log_bf11`.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Per `(component h, level l)` counts, sums and sums of squares of the
/// response for one predictor and one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSuffStats {
    k: usize,
    d: usize,
    counts: Vec<usize>,
    sums: Vec<f64>,
    sumsq: Vec<f64>,
}

impl LevelSuffStats {
    pub fn zeros(k: usize, d: usize) -> Self {
        LevelSuffStats {
            k,
            d,
            counts: vec![0; k * d],
            sums: vec![0.0; k * d],
            sumsq: vec![0.0; k * d],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn levels(&self) -> usize {
        self.d
    }

    #[inline]
    fn cell(&self, h: usize, l: usize) -> usize {
        h * self.d + l
    }

    pub fn count(&self, h: usize, l: usize) -> usize {
        self.counts[self.cell(h, l)]
    }

    pub fn sum(&self, h: usize, l: usize) -> f64 {
        self.sums[self.cell(h, l)]
    }

    pub fn sumsq(&self, h: usize, l: usize) -> f64 {
        self.sumsq[self.cell(h, l)]
    }

    /// `n_jh`, subjects in component `h` across all levels.
    pub fn component_total(&self, h: usize) -> usize {
        (0..self.d).map(|l| self.count(h, l)).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Adds one subject.
    pub fn push(&mut self, h: usize, l: usize, y: f64) {
        let c = self.cell(h, l);
        self.counts[c] += 1;
        self.sums[c] += y;
        self.sumsq[c] += y * y;
    }
}

/// One pass over the subjects of predictor `x_j`.
pub fn accumulate_suff_stats(
    y: &[f64],
    x_j: &[u8],
    allocations: &[usize],
    k: usize,
    levels: usize,
) -> Result<LevelSuffStats> {
    if y.len() != x_j.len() || y.len() != allocations.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} responses, {} predictor values, {} allocations",
            y.len(),
            x_j.len(),
            allocations.len()
        )));
    }
    let mut stats = LevelSuffStats::zeros(k, levels);
    for i in 0..y.len() {
        let l = x_j[i] as usize;
        if l >= levels {
            return Err(Error::invalid(format!(
                "level {l} of subject {} out of range for {levels} levels",
                i + 1
            )));
        }
        let h = allocations[i];
        if h >= k {
            return Err(Error::invalid(format!("allocation {h} out of range for k={k}")));
        }
        stats.push(h, l, y[i]);
    }
    Ok(stats)
}

/// Floors weights at [`WEIGHT_FLOOR`] and renormalizes.
pub fn floor_weights(weights: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = weights.iter().map(|w| w.max(WEIGHT_FLOOR)).collect();
    let s: f64 = floored.iter().sum();
    floored.into_iter().map(|w| w / s).collect()
}

/// Weight-change Bayes factor:
/// `Σ_l [ln β(n_j(l) + τω ω) − ln β(τω ω)] − Σ_h n_jh ln ω_h`.
pub fn log_bf11(stats: &LevelSuffStats, weights: &[f64], hp: &Hyperparams) -> Result<f64> {
    if weights.len() != stats.k {
        return Err(Error::invalid("weights length differs from k"));
    }
    crate::model::validate_simplex(weights)?;
    let w = floor_weights(weights);
    let prior: Vec<f64> = w.iter().map(|&wh| hp.tau_omega * wh).collect();
    let prior_total: f64 = prior.iter().sum();
    let ln_prior_beta: f64 = prior.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(prior_total);
    let mut out = 0.0;
    for l in 0..stats.d {
        let mut level_total = 0usize;
        let mut ln_beta = 0.0;
        for h in 0..stats.k {
            let c = stats.count(h, l);
            level_total += c;
            ln_beta += ln_gamma(c as f64 + prior[h]);
        }
        if level_total == 0 {
            continue;
        }
        ln_beta -= ln_gamma(level_total as f64 + prior_total);
        out += ln_beta - ln_prior_beta;
    }
    for h in 0..stats.k {
        out -= stats.component_total(h) as f64 * w[h].ln();
    }
    Ok(out)
}

/// Contribution of one nonempty cell to `log_bf12`: the log marginal
/// likelihood of the cell under the level prior, without the `(2π)^{-m/2}`
/// factor that cancels against the baseline likelihood.
///
/// `shifted_sum` and `shifted_sumsq` are `Σ(y − μ_h)` and `Σ(y − μ_h)²` over
/// the cell; `offset` is `ln Γ(a + m/2) − ln Γ(a) + ½ ln(τμ / (τμ + m))`.
#[inline]
pub(crate) fn cell_log_marginal(
    count: usize,
    shifted_sum: f64,
    shifted_sumsq: f64,
    shape: f64,
    rate: f64,
    ln_rate: f64,
    tau_mu: f64,
    offset: f64,
) -> f64 {
    let m = count as f64;
    let mean_offset = shifted_sum / m;
    let centered_ss = (shifted_sumsq - shifted_sum * mean_offset).max(0.0);
    let increment = m * tau_mu / (2.0 * (tau_mu + m)) * mean_offset * mean_offset + 0.5 * centered_ss;
    let growth = (increment / rate).ln_1p();
    // a ln b − (a + m/2) ln b', with ln b' = ln b + ln(1 + Δ/b)
    offset - (shape + 0.5 * m) * growth - 0.5 * m * ln_rate
}

/// Kernel-change Bayes factor given the draw's component means and variances.
pub fn log_bf12(stats: &LevelSuffStats, draw: &MixtureDraw, hp: &Hyperparams) -> Result<f64> {
    if draw.k() != stats.k {
        return Err(Error::invalid("draw has a different component count"));
    }
    let mut out = 0.0;
    for h in 0..stats.k {
        let mu = draw.means[h];
        let var = draw.variances[h];
        if !(var > 0.0 && var.is_finite() && mu.is_finite()) {
            return Err(Error::invalid(format!("component {} has invalid parameters", h + 1)));
        }
        let (shape, rate) = level_variance_prior(hp.tau_sigma, var);
        let ln_rate = rate.ln();
        let mut n_h = 0usize;
        let mut sum_h = 0.0;
        let mut sumsq_h = 0.0;
        for l in 0..stats.d {
            let m = stats.count(h, l);
            if m == 0 {
                continue;
            }
            let (s, ss) = (stats.sum(h, l), stats.sumsq(h, l));
            n_h += m;
            sum_h += s;
            sumsq_h += ss;
            // Shift the raw sums to be centered on μ_h.
            let mf = m as f64;
            let shifted_sum = s - mf * mu;
            let shifted_sumsq = ss - 2.0 * mu * s + mf * mu * mu;
            let term = cell_log_marginal(
                m,
                shifted_sum,
                shifted_sumsq,
                shape,
                rate,
                ln_rate,
                hp.tau_mu,
                ln_gamma(shape + 0.5 * mf) - ln_gamma(shape) + 0.5 * (hp.tau_mu.ln() - (hp.tau_mu + mf).ln()),
            );
            if !term.is_finite() {
                return Err(Error::Numeric {
                    context: format!("log_bf12 cell (h={}, l={l})", h + 1),
                    msg: format!("non-finite value {term}"),
                });
            }
            out += term;
        }
        if n_h > 0 {
            let nf = n_h as f64;
            let dev = (sumsq_h - 2.0 * mu * sum_h + nf * mu * mu).max(0.0);
            out += 0.5 * nf * var.ln() + dev / (2.0 * var);
        }
    }
    if !out.is_finite() {
        return Err(Error::Numeric {
            context: "log_bf12".into(),
            msg: format!("non-finite value {out}"),
        });
    }
    Ok(out)
}

/// Log Bayes factors of the three alternatives; `log_bf13` is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBFTriple {
    pub log_bf11: f64,
    pub log_bf12: f64,
}

impl LogBFTriple {
    #[inline]
    pub fn log_bf13(&self) -> f64 {
        self.log_bf11 + self.log_bf12
    }
}

pub fn make_triple(log_bf11: f64, log_bf12: f64) -> LogBFTriple {
    LogBFTriple { log_bf11, log_bf12 }
}

/// Posterior hypothesis probabilities by log-sum-exp normalization of
/// `(ln κ0, ln κ11 + ln BF11, ln κ12 + ln BF12, ln κ13 + ln BF13)`.
pub fn posterior_probs(triple: &LogBFTriple, kappa: &[f64; 4]) -> Result<HypothesisProbs> {
    validate_kappa(kappa)?;
    let masses = [
        kappa[0].ln(),
        kappa[1].ln() + triple.log_bf11,
        kappa[2].ln() + triple.log_bf12,
        kappa[3].ln() + triple.log_bf13(),
    ];
    probs_from_log_masses(masses)
}

pub(crate) fn probs_from_log_masses(mut masses: [f64; 4]) -> Result<HypothesisProbs> {
    let lse = crate::special::log_sum_exp(&masses);
    if !lse.is_finite() {
        return Err(Error::invalid("hypothesis masses are all zero or non-finite"));
    }
    for m in masses.iter_mut() {
        *m = (*m - lse).exp();
    }
    Ok(HypothesisProbs::from_array(masses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{standard_normal, stream_rng};
    use rand::Rng;

    fn hp(k: usize) -> Hyperparams {
        Hyperparams::defaults(k)
    }

    fn random_instance(seed: u64, n: usize, k: usize, d: usize) -> (Vec<f64>, Vec<u8>, Vec<usize>) {
        let mut rng = stream_rng(seed, 77);
        let y = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let x = (0..n).map(|_| rng.random_range(0..d as u8)).collect();
        let c = (0..n).map(|_| rng.random_range(0..k)).collect();
        (y, x, c)
    }

    #[test]
    fn suff_stats_examples() {
        let s = accumulate_suff_stats(&[], &[], &[], 3, 2).unwrap();
        assert_eq!(s.total(), 0);
        assert!(s.sums.iter().all(|&v| v == 0.0));

        let y = [1.0, 2.0, 4.0];
        let s = accumulate_suff_stats(&y, &[0, 0, 0], &[0, 0, 0], 2, 2).unwrap();
        assert_eq!(s.count(0, 0), 3);
        assert_eq!(s.sum(0, 0), 7.0);
        assert_eq!(s.sumsq(0, 0), 21.0);
        assert_eq!(s.total(), 3);
        assert_eq!(s.count(1, 0) + s.count(0, 1) + s.count(1, 1), 0);

        assert!(accumulate_suff_stats(&y, &[0, 2, 0], &[0, 0, 0], 2, 2).is_err());
        assert!(accumulate_suff_stats(&y, &[0, 0], &[0, 0, 0], 2, 2).is_err());
    }

    #[test]
    fn suff_stats_match_double_loop() {
        let (n, k, d) = (50, 3, 2);
        let (y, x, c) = random_instance(1, n, k, d);
        let s = accumulate_suff_stats(&y, &x, &c, k, d).unwrap();
        for h in 0..k {
            for l in 0..d {
                let mut cnt = 0;
                let mut sum = 0.0;
                let mut sq = 0.0;
                for i in 0..n {
                    if c[i] == h && x[i] as usize == l {
                        cnt += 1;
                        sum += y[i];
                        sq += y[i] * y[i];
                    }
                }
                assert_eq!(s.count(h, l), cnt);
                assert_eq!(s.sum(h, l), sum);
                assert_eq!(s.sumsq(h, l), sq);
                assert!(s.sumsq(h, l) >= s.sum(h, l).powi(2) / cnt.max(1) as f64 - 1e-12);
            }
        }
        assert_eq!(s.total(), n);
    }

    #[test]
    fn bf11_examples() {
        let zero = LevelSuffStats::zeros(3, 2);
        assert_eq!(log_bf11(&zero, &[0.2, 0.3, 0.5], &hp(3)).unwrap(), 0.0);

        let (y, x, _) = random_instance(2, 30, 1, 3);
        let s = accumulate_suff_stats(&y, &x, &vec![0; 30], 1, 3).unwrap();
        assert!(log_bf11(&s, &[1.0], &hp(1)).unwrap().abs() < 1e-12);

        // counts n(0) = (2, 0), n(1) = (0, 2), ω = (½, ½), τω = 2
        let mut s = LevelSuffStats::zeros(2, 2);
        s.push(0, 0, 0.0);
        s.push(0, 0, 0.0);
        s.push(1, 1, 0.0);
        s.push(1, 1, 0.0);
        let h = Hyperparams { tau_omega: 2.0, ..hp(2) };
        let v = log_bf11(&s, &[0.5, 0.5], &h).unwrap();
        assert!((v - (16.0f64 / 9.0).ln()).abs() < 1e-12);
        assert!((v - 0.575_364).abs() < 1e-6);
    }

    #[test]
    fn bf11_zero_weight_is_floored() {
        let mut s = LevelSuffStats::zeros(2, 2);
        s.push(0, 0, 0.0);
        s.push(0, 1, 0.0);
        let v = log_bf11(&s, &[1.0, 0.0], &hp(2)).unwrap();
        assert!(v.is_finite());
        let w = log_bf11(&s, &[1.0 - 1e-12, 1e-12], &hp(2)).unwrap();
        assert!((v - w).abs() < 1e-9);
    }

    #[test]
    fn bf12_empty_is_zero() {
        let zero = LevelSuffStats::zeros(2, 3);
        let draw = MixtureDraw {
            weights: vec![0.5, 0.5],
            means: vec![-1.0, 1.0],
            variances: vec![0.5, 2.0],
            allocations: vec![],
        };
        assert_eq!(log_bf12(&zero, &draw, &hp(2)).unwrap(), 0.0);
    }

    #[test]
    fn bf12_single_cell_closed_form() {
        // One observation at μ_1 in each of two levels; b' = b, so each cell is
        // ln Γ(a+½) − ln Γ(a) − ½ ln b + ½ ln(τμ/(τμ+1)), and the baseline term
        // adds ½ ln σ² per observation.
        let h = hp(1);
        let (mu, var) = (0.3, 0.8);
        let draw = MixtureDraw {
            weights: vec![1.0],
            means: vec![mu],
            variances: vec![var],
            allocations: vec![0, 0],
        };
        let s = accumulate_suff_stats(&[mu, mu], &[0, 1], &[0, 0], 1, 2).unwrap();
        let (a, b) = level_variance_prior(h.tau_sigma, var);
        let cell = ln_gamma(a + 0.5) - ln_gamma(a) - 0.5 * b.ln() + 0.5 * (h.tau_mu / (h.tau_mu + 1.0)).ln();
        let want = 2.0 * cell + var.ln();
        assert!((log_bf12(&s, &draw, &h).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn bf_label_permutation_invariance() {
        let (n, k, d) = (40, 2, 2);
        let (y, x, c) = random_instance(5, n, k, d);
        let draw = MixtureDraw {
            weights: vec![0.35, 0.65],
            means: vec![-0.4, 0.6],
            variances: vec![0.7, 1.3],
            allocations: c,
        };
        let h = hp(2);
        let s = accumulate_suff_stats(&y, &x, &draw.allocations, k, d).unwrap();
        let perm = draw.permuted(&[1, 0]);
        let sp = accumulate_suff_stats(&y, &x, &perm.allocations, k, d).unwrap();
        let a11 = log_bf11(&s, &draw.weights, &h).unwrap();
        let b11 = log_bf11(&sp, &perm.weights, &h).unwrap();
        let a12 = log_bf12(&s, &draw, &h).unwrap();
        let b12 = log_bf12(&sp, &perm, &h).unwrap();
        assert!((a11 - b11).abs() < 1e-10);
        assert!((a12 - b12).abs() < 1e-10);
    }

    #[test]
    fn triple_examples() {
        let t = make_triple(0.0, 0.0);
        assert_eq!((t.log_bf11, t.log_bf12, t.log_bf13()), (0.0, 0.0, 0.0));
        let t = make_triple(2f64.ln(), 3f64.ln());
        assert!((t.log_bf13() - 6f64.ln()).abs() < 1e-15);
        let t = make_triple(-712.25, 3.5e-3);
        assert_eq!(t.log_bf13(), -712.25 + 3.5e-3);
    }

    #[test]
    fn posterior_examples() {
        let p = posterior_probs(&make_triple(5.0, -2.0), &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.p0, 1.0);

        let k = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        let p = posterior_probs(&make_triple(0.0, 0.0), &k).unwrap();
        assert!((p.p0 - 0.5).abs() < 1e-15);
        for v in [p.p11, p.p12, p.p13] {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }

        let p = posterior_probs(&make_triple(3f64.ln(), 0.0), &k).unwrap();
        assert!((p.p0 - 0.3).abs() < 1e-12);
        assert!((p.p11 - 0.3).abs() < 1e-12);
        assert!((p.p12 - 0.1).abs() < 1e-12);
        assert!((p.p13 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn posterior_zero_null_prior() {
        let p = posterior_probs(&make_triple(-3.0, 1.0), &[0.0, 0.5, 0.25, 0.25]).unwrap();
        assert_eq!(p.p0, 0.0);
        assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(posterior_probs(&make_triple(0.0, 0.0), &[0.5, 0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn posterior_extreme_bayes_factors() {
        let k = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        let p = posterior_probs(&make_triple(900.0, 900.0), &k).unwrap();
        assert!(p.p13 > 0.999_999 && p.p0 == 0.0);
        let p = posterior_probs(&make_triple(-900.0, -900.0), &k).unwrap();
        assert!((p.p0 - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kappa() -> impl Strategy<Value = [f64; 4]> {
            prop::array::uniform4(0.01f64..1.0).prop_map(|v| {
                let s: f64 = v.iter().sum();
                [v[0] / s, v[1] / s, v[2] / s, v[3] / s]
            })
        }

        proptest! {
            #[test]
            fn probs_are_a_simplex(b11 in -500.0f64..500.0, b12 in -500.0f64..500.0, k in kappa()) {
                let p = posterior_probs(&make_triple(b11, b12), &k).unwrap().as_array();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            }

            #[test]
            fn null_prob_decreases_in_bf11(b11 in -30.0f64..30.0, b12 in -30.0f64..30.0, step in 0.01f64..5.0, k in kappa()) {
                let lo = posterior_probs(&make_triple(b11, b12), &k).unwrap().p0;
                let hi = posterior_probs(&make_triple(b11 + step, b12), &k).unwrap().p0;
                prop_assert!(hi < lo);
            }

            #[test]
            fn triple_identity(b11 in -1e6f64..1e6, b12 in -1e6f64..1e6) {
                let t = make_triple(b11, b12);
                prop_assert_eq!(t.log_bf13(), b11 + b12);
            }
        }
    }
}
