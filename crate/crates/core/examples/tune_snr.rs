//! Prior signal-to-noise ratio of the default hyperparameters, and how it
//! moves when the precisions are tightened or loosened.

use mobs::{estimate_snr, Hyperparams};

fn main() -> mobs::Result<()> {
    for k in [3, 7] {
        let base = Hyperparams::defaults(k);
        for scale in [0.1, 1.0, 10.0] {
            let hp = Hyperparams {
                tau_omega: base.tau_omega * scale,
                tau_mu: base.tau_mu * scale,
                tau_sigma: base.tau_sigma * scale,
                ..base.clone()
            };
            let est = estimate_snr(&hp, 5000, 1)?;
            println!(
                "k={k} tau x{scale:<4} delta0={:.4e} delta1={:.4e} ratio={:.4} (se {:.4})",
                est.delta0, est.delta1, est.ratio, est.mc_stderr_ratio
            );
        }
    }
    Ok(())
}
