//! Special functions and log-space helpers.

/// `ln Γ(x)` for `x > 0`.
///
/// Backed by the fdlibm `lgamma` port in `libm`, which is accurate to a few
/// ulp over the positive axis.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln Σ exp(v_i)`, returning `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-masses into probabilities in place. Returns the log normalizer.
pub fn normalize_log_masses(values: &mut [f64]) -> f64 {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

#[cfg(test)]
mod tests {
    use super::*;

    // Stirling series with Bernoulli terms, independent of libm.
    fn stirling_ln_gamma(x: f64) -> f64 {
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        (x - 0.5) * x.ln() - x
            + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_eq!(ln_gamma(1.0), 0.0);
        assert_eq!(ln_gamma(2.0), 0.0);
        let half = 0.5 * std::f64::consts::PI.ln();
        assert!((ln_gamma(0.5) - half).abs() < 1e-15);
        // Γ(10) = 9! = 362880
        assert!((ln_gamma(10.0) - 362880f64.ln()).abs() / 362880f64.ln() < 1e-14);
    }

    #[test]
    fn ln_gamma_relative_accuracy_large_and_small() {
        for &x in &[30.0, 123.456, 1e3, 5.5e4, 1e6, 1e8] {
            let want = stirling_ln_gamma(x);
            assert!(((ln_gamma(x) - want) / want).abs() < 1e-12, "x={x}");
        }
        // Γ(x) = Γ(x + 1) / x pushes tiny arguments into the Stirling range.
        for &x in &[1e-3f64, 0.013, 0.37] {
            let mut shifted = x;
            let mut acc = 0.0;
            while shifted < 30.0 {
                acc -= shifted.ln();
                shifted += 1.0;
            }
            let want = acc + stirling_ln_gamma(shifted);
            assert!(((ln_gamma(x) - want) / want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [-1000.0, -1000.0];
        assert!((log_sum_exp(&v) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert!((log_sum_exp(&[0.0, f64::NEG_INFINITY]) - 0.0).abs() < 1e-15);
    }
}
