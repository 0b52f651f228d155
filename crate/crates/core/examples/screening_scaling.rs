//! Wall time of the screening stage as n and p grow. The baseline chain is
//! fitted once per shape and excluded from the timing.

use std::time::Instant;

use mobs::{fit_baseline, screen, simulate, ChainConfig, Hyperparams, ResponseTransform, ScreenConfig, SimModel, SimSpec};

fn main() -> mobs::Result<()> {
    let hp = Hyperparams::defaults(3);
    let cfg = ScreenConfig {
        threads: 1,
        ..ScreenConfig::default()
    };
    let mut base = None;
    for (n, p) in [(200, 2000), (200, 4000), (400, 2000)] {
        let inst = simulate(&SimSpec::new(SimModel::Linear, n, p, 1))?;
        let y = inst.dataset.y();
        let chain = fit_baseline(y, &hp, &ChainConfig::default(), ResponseTransform::standardizing(y))?;
        let mut times = Vec::new();
        let mut iters = 0;
        for _ in 0..3 {
            let t = Instant::now();
            let res = screen(&inst.dataset, &chain, &hp, &cfg)?;
            times.push(t.elapsed().as_secs_f64());
            iters = res.iterations;
        }
        times.sort_by(f64::total_cmp);
        let t = times[1];
        let rel = *base.get_or_insert(t);
        println!("n={n:4} p={p:5}  {t:.3}s  ({:.2}x)  kappa iterations={iters}", t / rel);
    }
    Ok(())
}
