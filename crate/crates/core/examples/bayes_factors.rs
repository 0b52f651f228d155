//! Per-predictor Bayes factors for a single baseline draw, and the resulting
//! hypothesis probabilities.

use mobs::bayes_factors::make_triple;
use mobs::{accumulate_suff_stats, log_bf11, log_bf12, posterior_probs, Hyperparams, MixtureDraw};

fn main() -> mobs::Result<()> {
    let hp = Hyperparams::defaults(2);
    let draw = MixtureDraw {
        weights: vec![0.5, 0.5],
        means: vec![-1.0, 1.0],
        variances: vec![0.5, 0.5],
        allocations: vec![0, 0, 0, 0, 1, 1, 1, 1],
    };
    let y = [-1.2, -0.8, -1.1, -0.9, 0.9, 1.1, 1.0, 1.2];

    // Level 0 only ever meets component 1 and level 1 only component 2:
    // a strong weight change. The interleaved column carries no signal.
    for (name, x) in [("aligned", [0u8, 0, 0, 0, 1, 1, 1, 1]), ("interleaved", [0, 1, 0, 1, 0, 1, 0, 1])] {
        let stats = accumulate_suff_stats(&y, &x, &draw.allocations, 2, 2)?;
        let triple = make_triple(log_bf11(&stats, &draw.weights, &hp)?, log_bf12(&stats, &draw, &hp)?);
        let probs = posterior_probs(&triple, &hp.kappa)?;
        println!(
            "{name:>11}: log BF11 {:+.3}  log BF12 {:+.3}  log BF13 {:+.3}  ->  p0 {:.4}  p11 {:.4}  p12 {:.4}  p13 {:.4}",
            triple.log_bf11,
            triple.log_bf12,
            triple.log_bf13(),
            probs.p0,
            probs.p11,
            probs.p12,
            probs.p13
        );
    }
    Ok(())
}
