//! Domain types and elementary density primitives shared by every stage.
//!
//! Components are 0-based in memory (`0..k`); file formats written by
//! [`crate::io`] use 1-based component and predictor indices.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{ln_gamma, log_sum_exp};

const SIMPLEX_TOL: f64 = 1e-12;

/// Sentinel code for a missing predictor value.
pub const MISSING: u8 = u8::MAX;

/// All tuning knobs of the baseline mixture and the per-predictor tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Prior hypothesis probabilities `(κ0, κ11, κ12, κ13)`.
    pub kappa: [f64; 4],
    /// Dirichlet precision of level-specific weights around the baseline.
    pub tau_omega: f64,
    /// Precision of level-specific means around the baseline means.
    pub tau_mu: f64,
    /// Precision of level-specific variances around the baseline variances.
    pub tau_sigma: f64,
    /// Base prior mean.
    pub mu0: f64,
    /// Base prior mean-variance scale.
    pub q: f64,
    /// Inverse-gamma shape of the base prior.
    pub a: f64,
    /// Inverse-gamma rate of the base prior.
    pub b: f64,
    /// Dirichlet concentration of baseline weights (each weight gets `alpha / k`).
    pub alpha: f64,
    /// Number of mixture components.
    pub k: usize,
}

impl Hyperparams {
    /// Default specification for `k` components. See [`crate::tuner::default_hyperparams`].
    pub fn defaults(k: usize) -> Self {
        crate::tuner::default_hyperparams(k)
    }

    pub fn validate(&self) -> Result<()> {
        validate_kappa(&self.kappa)?;
        let positive = [
            ("tau_omega", self.tau_omega),
            ("tau_mu", self.tau_mu),
            ("tau_sigma", self.tau_sigma),
            ("q", self.q),
            ("a", self.a),
            ("b", self.b),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !self.mu0.is_finite() {
            return Err(Error::invalid("mu0 must be finite"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        Ok(())
    }
}

pub(crate) fn validate_kappa(kappa: &[f64; 4]) -> Result<()> {
    if kappa.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(format!("kappa entries must be nonnegative, got {kappa:?}")));
    }
    let sum: f64 = kappa.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("kappa must sum to 1, got {sum}")));
    }
    Ok(())
}

/// One posterior draw of the baseline mixture: weights, component
/// parameters and per-subject allocations.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDraw {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub allocations: Vec<usize>,
}

impl MixtureDraw {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.allocations.len()
    }

    pub fn validate(&self) -> Result<()> {
        validate_components(&self.weights, &self.means, &self.variances)?;
        let k = self.k();
        if let Some(c) = self.allocations.iter().find(|&&c| c >= k) {
            return Err(Error::invalid(format!("allocation {c} out of range for k={k}")));
        }
        Ok(())
    }

    /// Relabels components: new component `h` is old component `perm[h]`.
    pub fn permuted(&self, perm: &[usize]) -> MixtureDraw {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        MixtureDraw {
            weights: perm.iter().map(|&h| self.weights[h]).collect(),
            means: perm.iter().map(|&h| self.means[h]).collect(),
            variances: perm.iter().map(|&h| self.variances[h]).collect(),
            allocations: self.allocations.iter().map(|&c| inverse[c]).collect(),
        }
    }

    /// Number of subjects allocated to each component.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &c in &self.allocations {
            counts[c] += 1;
        }
        counts
    }
}

pub(crate) fn validate_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::invalid("empty weight vector"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL * weights.len().max(1) as f64 {
        return Err(Error::invalid(format!("weights must sum to 1, got {sum}")));
    }
    Ok(())
}

pub(crate) fn validate_components(weights: &[f64], means: &[f64], variances: &[f64]) -> Result<()> {
    validate_simplex(weights)?;
    if means.len() != weights.len() || variances.len() != weights.len() {
        return Err(Error::invalid(format!(
            "component vectors disagree in length: {} weights, {} means, {} variances",
            weights.len(),
            means.len(),
            variances.len()
        )));
    }
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::invalid("means must be finite"));
    }
    if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("variances must be finite and > 0"));
    }
    Ok(())
}

/// Response vector plus a column-major categorical predictor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    /// Column-major codes, `x[j * n + i]`; [`MISSING`] marks a missing value.
    x: Vec<u8>,
    levels: Vec<u8>,
}

impl Dataset {
    /// Builds a dataset from column-major codes.
    pub fn new(y: Vec<f64>, x: Vec<u8>, levels: Vec<u8>) -> Result<Self> {
        let n = y.len();
        let p = levels.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no subjects".into()));
        }
        if p == 0 {
            return Err(Error::InvalidInput("dataset has no predictors".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response at subject {}", i + 1)));
        }
        if x.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "predictor matrix has {} cells, expected {n} x {p}",
                x.len()
            )));
        }
        for (j, &d) in levels.iter().enumerate() {
            if d < 2 || d == MISSING {
                return Err(Error::InvalidInput(format!(
                    "predictor {} has {d} levels; need 2..=254",
                    j + 1
                )));
            }
            let col = &x[j * n..(j + 1) * n];
            if let Some(i) = col.iter().position(|&v| v != MISSING && v >= d) {
                return Err(Error::InvalidInput(format!(
                    "x[{}][{}] = {} exceeds level count {d}",
                    i + 1,
                    j + 1,
                    col[i]
                )));
            }
        }
        Ok(Dataset { y, x, levels })
    }

    /// Builds a dataset from row-major rows, inferring levels as `1 + max`
    /// (at least 2).
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged predictor rows".into()));
        }
        let mut x = vec![0u8; n * p];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                x[j * n + i] = v;
            }
        }
        let levels = infer_levels(&x, n, p);
        Dataset::new(y, x, levels)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.levels.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn column(&self, j: usize) -> &[u8] {
        let n = self.n();
        &self.x[j * n..(j + 1) * n]
    }

    /// Raw column-major codes.
    pub fn codes(&self) -> &[u8] {
        &self.x
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.x[j * self.n() + i]
    }

    /// Returns a copy with the response replaced.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::InvalidInput(format!(
                "response has {} values, dataset has {} subjects",
                y.len(),
                self.n()
            )));
        }
        Dataset::new(y, self.x.clone(), self.levels.clone())
    }

    /// Structural degeneracy of predictor `j`, if any.
    pub fn degeneracy(&self, j: usize) -> Option<Degeneracy> {
        let col = self.column(j);
        if col.contains(&MISSING) {
            return Some(Degeneracy::Missing);
        }
        let d = self.levels[j] as usize;
        let mut seen = vec![false; d];
        for &v in col {
            seen[v as usize] = true;
        }
        let present = seen.iter().filter(|&&s| s).count();
        if present <= 1 {
            Some(Degeneracy::Constant)
        } else if present < d {
            Some(Degeneracy::EmptyLevel)
        } else {
            None
        }
    }
}

pub(crate) fn infer_levels(x: &[u8], n: usize, p: usize) -> Vec<u8> {
    (0..p)
        .map(|j| {
            let max = x[j * n..(j + 1) * n]
                .iter()
                .filter(|&&v| v != MISSING)
                .max()
                .copied()
                .unwrap_or(0);
            (max + 1).max(2)
        })
        .collect()
}

/// Why a predictor is excluded from screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// Only one observed level.
    Constant,
    /// Some level below the level count has no subjects.
    EmptyLevel,
    /// At least one missing value.
    Missing,
}

/// Posterior probabilities of the null and the three alternatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisProbs {
    pub p0: f64,
    pub p11: f64,
    pub p12: f64,
    pub p13: f64,
}

impl HypothesisProbs {
    pub const NULL: HypothesisProbs = HypothesisProbs {
        p0: 1.0,
        p11: 0.0,
        p12: 0.0,
        p13: 0.0,
    };

    pub fn as_array(&self) -> [f64; 4] {
        [self.p0, self.p11, self.p12, self.p13]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        HypothesisProbs {
            p0: v[0],
            p11: v[1],
            p12: v[2],
            p13: v[3],
        }
    }
}

#[inline]
pub(crate) fn ln_normal(t: f64, mean: f64, variance: f64) -> f64 {
    let z = t - mean;
    -0.5 * ((2.0 * PI * variance).ln() + z * z / variance)
}

/// `ln N(t | mean, variance)`.
pub fn log_gauss_pdf(t: f64, mean: f64, variance: f64) -> Result<f64> {
    if !t.is_finite() || !mean.is_finite() {
        return Err(Error::invalid("log_gauss_pdf: non-finite argument"));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::invalid(format!("log_gauss_pdf: variance must be > 0, got {variance}")));
    }
    Ok(ln_normal(t, mean, variance))
}

/// `ln β(α) = Σ ln Γ(α_h) − ln Γ(Σ α_h)`.
pub fn log_multivariate_beta(alpha: &[f64]) -> Result<f64> {
    if alpha.is_empty() {
        return Err(Error::invalid("log_multivariate_beta: empty argument"));
    }
    if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::invalid("log_multivariate_beta: entries must be finite and > 0"));
    }
    let total: f64 = alpha.iter().sum();
    Ok(alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total))
}

/// Log density of a Gaussian mixture, evaluated by log-sum-exp.
pub fn mixture_log_density(t: f64, weights: &[f64], means: &[f64], variances: &[f64]) -> Result<f64> {
    validate_components(weights, means, variances)?;
    if !t.is_finite() {
        return Err(Error::invalid("mixture_log_density: non-finite argument"));
    }
    let terms: Vec<f64> = weights
        .iter()
        .zip(means)
        .zip(variances)
        .map(|((&w, &m), &v)| w.ln() + ln_normal(t, m, v))
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Conditional allocation probabilities `ω_h N(y|μ_h,σ²_h) / Σ_l ω_l N(y|μ_l,σ²_l)`.
pub fn allocation_probs(y: f64, weights: &[f64], means: &[f64], variances: &[f64]) -> Result<Vec<f64>> {
    validate_components(weights, means, variances)?;
    if !y.is_finite() {
        return Err(Error::invalid("allocation_probs: non-finite response"));
    }
    let mut buf = vec![0.0; weights.len()];
    allocation_log_masses(y, weights, means, variances, &mut buf);
    let lse = log_sum_exp(&buf);
    if !lse.is_finite() {
        return Err(Error::Internal("allocation_probs: zero total mass".into()));
    }
    for v in buf.iter_mut() {
        *v = (*v - lse).exp();
    }
    Ok(buf)
}

#[inline]
pub(crate) fn allocation_log_masses(y: f64, weights: &[f64], means: &[f64], variances: &[f64], out: &mut [f64]) {
    for h in 0..weights.len() {
        out[h] = weights[h].ln() + ln_normal(y, means[h], variances[h]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

    #[test]
    fn gauss_examples() {
        assert!((log_gauss_pdf(0.0, 0.0, 1.0).unwrap() + LN_SQRT_2PI).abs() < 1e-15);
        assert!((log_gauss_pdf(1.0, 0.0, 1.0).unwrap() + LN_SQRT_2PI + 0.5).abs() < 1e-15);
        for &(m, v) in &[(3.0, 0.25), (-7.5, 9.0), (0.0, 1e-6)] {
            let want = -0.5 * (2.0 * PI * v).ln();
            assert!((log_gauss_pdf(m, m, v).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_rejects_bad_input() {
        assert!(log_gauss_pdf(0.0, 0.0, 0.0).is_err());
        assert!(log_gauss_pdf(0.0, 0.0, -1.0).is_err());
        assert!(log_gauss_pdf(f64::NAN, 0.0, 1.0).is_err());
        assert!(log_gauss_pdf(0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn multivariate_beta_examples() {
        assert!(log_multivariate_beta(&[1.0, 1.0]).unwrap().abs() < 1e-15);
        let half = 0.5f64.ln();
        assert!((log_multivariate_beta(&[1.0, 1.0, 1.0]).unwrap() - half).abs() < 1e-15);
        assert!((log_multivariate_beta(&[2.0, 1.0]).unwrap() - half).abs() < 1e-15);
        assert!(log_multivariate_beta(&[1.0, 0.0]).is_err());
        assert!(log_multivariate_beta(&[]).is_err());
    }

    #[test]
    fn mixture_density_examples() {
        let single = mixture_log_density(0.7, &[1.0], &[0.2], &[2.0]).unwrap();
        assert!((single - log_gauss_pdf(0.7, 0.2, 2.0).unwrap()).abs() < 1e-15);

        let dup = mixture_log_density(0.0, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((dup + LN_SQRT_2PI).abs() < 1e-15);

        let mix = mixture_log_density(0.0, &[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let want = (0.5 * 0.398_942_280_401_432_7 + 0.5 * 0.241_970_724_519_143_37f64).ln();
        assert!((mix - want).abs() < 1e-14);
        assert!((mix + 1.138_008_73).abs() < 1e-8);
    }

    #[test]
    fn mixture_density_far_tail_is_finite() {
        let v = mixture_log_density(1e3, &[0.3, 0.7], &[0.0, 0.5], &[1.0, 1.0]).unwrap();
        assert!(v.is_finite());
        let direct = 0.7f64.ln() + ln_normal(1e3, 0.5, 1.0);
        assert!((v - direct).abs() < 1e-9);
    }

    #[test]
    fn allocation_examples() {
        let w = [0.2, 0.5, 0.3];
        let p = allocation_probs(1.3, &w, &[0.0; 3], &[2.0; 3]).unwrap();
        for (a, b) in p.iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }

        let p = allocation_probs(2.0, &[0.5, 0.5], &[0.0, 4.0], &[1.5, 1.5]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let p = allocation_probs(0.0, &[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let e = 0.5f64.exp();
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.62246).abs() < 1e-5);
    }

    #[test]
    fn allocation_zero_weight_component() {
        let p = allocation_probs(0.0, &[1.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![], vec![2]).is_err());
        assert!(Dataset::new(vec![1.0], vec![2], vec![2]).is_err());
        assert!(Dataset::new(vec![f64::NAN], vec![0], vec![2]).is_err());
        let ds = Dataset::from_rows(vec![1.0, 2.0, 3.0], &[vec![0, 1], vec![1, 1], vec![0, 1]]).unwrap();
        assert_eq!(ds.levels(), &[2, 2]);
        assert_eq!(ds.column(0), &[0, 1, 0]);
        assert_eq!(ds.degeneracy(0), None);
        assert_eq!(ds.degeneracy(1), Some(Degeneracy::Constant));
        let ds = Dataset::from_rows(vec![1.0, 2.0], &[vec![0, 0], vec![MISSING, 0]]).unwrap();
        assert_eq!(ds.degeneracy(0), Some(Degeneracy::Missing));
        assert_eq!(ds.degeneracy(1), Some(Degeneracy::Constant));
        let ds = Dataset::from_rows(vec![1.0, 2.0], &[vec![0], vec![2]]).unwrap();
        assert_eq!(ds.degeneracy(0), Some(Degeneracy::EmptyLevel));
    }

    #[test]
    fn permuted_draw_roundtrip() {
        let d = MixtureDraw {
            weights: vec![0.2, 0.3, 0.5],
            means: vec![1.0, 2.0, 3.0],
            variances: vec![0.1, 0.2, 0.3],
            allocations: vec![0, 2, 1, 1],
        };
        let p = d.permuted(&[2, 0, 1]);
        assert_eq!(p.weights, vec![0.5, 0.2, 0.3]);
        assert_eq!(p.allocations, vec![1, 0, 2, 2]);
        for i in 0..4 {
            assert_eq!(p.means[p.allocations[i]], d.means[d.allocations[i]]);
        }
        assert!(p.validate().is_ok());
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn allocation_probs_is_simplex(
            y in -50.0f64..50.0,
            w in simplex(4),
            m in prop::collection::vec(-10.0f64..10.0, 4),
            v in prop::collection::vec(0.01f64..10.0, 4),
        ) {
            let p = allocation_probs(y, &w, &m, &v).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn allocation_probs_shift_invariant(
            y in -5.0f64..5.0,
            w in simplex(3),
            m in prop::collection::vec(-3.0f64..3.0, 3),
            v in 0.1f64..3.0,
            shift in -200.0f64..200.0,
        ) {
            // Equal variances: a common additive constant in every log-mass cancels.
            let vars = vec![v; 3];
            let base = allocation_probs(y, &w, &m, &vars).unwrap();
            let mut masses = vec![0.0; 3];
            allocation_log_masses(y, &w, &m, &vars, &mut masses);
            let shifted: Vec<f64> = masses.iter().map(|x| x + shift).collect();
            let lse = log_sum_exp(&shifted);
            for h in 0..3 {
                prop_assert!(((shifted[h] - lse).exp() - base[h]).abs() < 1e-12);
            }
        }

        #[test]
        fn mixture_density_exchangeable(
            t in -10.0f64..10.0,
            w in simplex(4),
            m in prop::collection::vec(-5.0f64..5.0, 4),
            v in prop::collection::vec(0.05f64..5.0, 4),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let a = mixture_log_density(t, &w, &m, &v).unwrap();
            let pw: Vec<f64> = perm.iter().map(|&h| w[h]).collect();
            let pm: Vec<f64> = perm.iter().map(|&h| m[h]).collect();
            let pv: Vec<f64> = perm.iter().map(|&h| v[h]).collect();
            let b = mixture_log_density(t, &pw, &pm, &pv).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn multivariate_beta_increment_recurrence(
            alpha in prop::collection::vec(0.05f64..20.0, 1..6),
            pick in 0usize..6,
        ) {
            let h = pick % alpha.len();
            let mut bumped = alpha.clone();
            bumped[h] += 1.0;
            let total: f64 = alpha.iter().sum();
            let lhs = log_multivariate_beta(&bumped).unwrap() - log_multivariate_beta(&alpha).unwrap();
            let rhs = (alpha[h] / total).ln();
            prop_assert!((lhs - rhs).abs() < 1e-11);
        }
    }
}
