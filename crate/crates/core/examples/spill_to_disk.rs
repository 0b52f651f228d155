//! Screening with a memory budget too small for the Bayes-factor cache, so
//! chunks go to disk; the probabilities match the in-memory run.

use mobs::{compute_bf_cache, fit_baseline, screen, simulate, ChainConfig, Hyperparams, ResponseTransform, ScreenConfig, SimModel, SimSpec};

fn main() -> mobs::Result<()> {
    let inst = simulate(&SimSpec::new(SimModel::Linear, 150, 300, 4))?;
    let y = inst.dataset.y();
    let hp = Hyperparams::defaults(3);
    let chain = fit_baseline(y, &hp, &ChainConfig::default(), ResponseTransform::standardizing(y))?;

    let in_memory = ScreenConfig {
        chunk_size: 32,
        ..ScreenConfig::default()
    };
    let spilled = ScreenConfig {
        mem_budget: 64 << 10,
        chunk_size: 32,
        ..ScreenConfig::default()
    };
    let cache = compute_bf_cache(&inst.dataset, &chain, &hp, &spilled)?;
    println!(
        "{} rows x {} draws in {} chunks, spilled: {}",
        cache.rows(),
        cache.draws(),
        cache.n_chunks(),
        cache.is_spilled()
    );

    let a = screen(&inst.dataset, &chain, &hp, &in_memory)?.null_probs();
    let b = screen(&inst.dataset, &chain, &hp, &spilled)?.null_probs();
    let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("max |difference| in pi0: {worst:.1e}");
    Ok(())
}
