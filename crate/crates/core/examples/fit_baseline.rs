//! Fits the baseline mixture to a two-bump response and summarizes the
//! retained draws.

use mobs::{run_chain, ChainConfig, Hyperparams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> mobs::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let y: Vec<f64> = (0..400)
        .map(|_| {
            let centre = if rng.random::<bool>() { -3.0 } else { 3.0 };
            centre + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();

    let hp = Hyperparams::defaults(3);
    let chain = run_chain(&y, &hp, &ChainConfig::default())?;

    let last = chain.log_joint.last().copied().unwrap_or(f64::NAN);
    println!("{} sweeps, {} retained draws, final log joint {last:.2}", chain.log_joint.len(), chain.draws.len());
    for h in 0..hp.k {
        let s = chain.draws.len() as f64;
        // Labels may switch between draws; these are per-label averages.
        let w = chain.draws.iter().map(|d| d.weights[h]).sum::<f64>() / s;
        let mu = chain.draws.iter().map(|d| d.means[h]).sum::<f64>() / s;
        let var = chain.draws.iter().map(|d| d.variances[h]).sum::<f64>() / s;
        println!("component {}: weight {w:.3}  mean {mu:+.3}  variance {var:.3}", h + 1);
    }
    Ok(())
}
