//! ROC comparison against marginal correlation on the six simulation
//! models (small replicates).

use mobs::sim::marginal_corr_scores;
use mobs::{fit_baseline, roc_auc, screen, simulate, ChainConfig, Hyperparams, ResponseTransform, ScreenConfig, SimModel, SimSpec};

fn main() -> mobs::Result<()> {
    let chain_cfg = ChainConfig {
        total_iters: 2000,
        burn_in: 1500,
        keep: 500,
        ..ChainConfig::default()
    };
    for number in 1..=6 {
        let model = SimModel::from_number(number)?;
        let k = if number >= 5 { 7 } else { 3 };
        let hp = Hyperparams::defaults(k);
        let (mut ours, mut corr) = (0.0, 0.0);
        let reps = 5;
        for seed in 0..reps {
            let inst = simulate(&SimSpec::new(model, 200, 500, seed))?;
            let y = inst.dataset.y();
            let chain = fit_baseline(y, &hp, &ChainConfig { seed, ..chain_cfg }, ResponseTransform::standardizing(y))?;
            let pi = screen(&inst.dataset, &chain, &hp, &ScreenConfig::default())?.null_probs();
            ours += roc_auc(&pi, &inst.truth)?.auc / reps as f64;
            let scores: Vec<f64> = marginal_corr_scores(&inst.dataset).iter().map(|c| -c).collect();
            corr += roc_auc(&scores, &inst.truth)?.auc / reps as f64;
        }
        println!("model {number} (k={k}): AUC {ours:.3}  marginal correlation {corr:.3}");
    }
    Ok(())
}
