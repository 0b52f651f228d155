//! The whole pipeline on a simulated linear-model replicate: baseline fit,
//! screening, and the selected predictors.

use mobs::{fit_baseline, screen, select_top, simulate, ChainConfig, Hyperparams, ResponseTransform, ScreenConfig, SimModel, SimSpec};

fn main() -> mobs::Result<()> {
    let inst = simulate(&SimSpec::new(SimModel::Linear, 200, 500, 1))?;
    let y = inst.dataset.y();
    let hp = Hyperparams::defaults(3);
    let chain = fit_baseline(y, &hp, &ChainConfig::default(), ResponseTransform::standardizing(y))?;
    let res = screen(&inst.dataset, &chain, &hp, &ScreenConfig::default())?;

    println!(
        "kappa = [{:.4}, {:.4}, {:.4}, {:.4}] after {} updates (converged: {})",
        res.kappa[0], res.kappa[1], res.kappa[2], res.kappa[3], res.iterations, res.converged
    );
    let pi = res.null_probs();
    let top = select_top(&pi, 10)?;
    for j in &top {
        let mark = if inst.truth.contains(j) { "  <- true predictor" } else { "" };
        println!("x{:<4} pi0 = {:.3e}{mark}", j + 1, pi[*j]);
    }
    Ok(())
}
