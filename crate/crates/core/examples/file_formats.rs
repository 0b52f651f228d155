//! Writes a dataset in both predictor formats, persists a chain and a
//! results file, and reads everything back.

use mobs::io::{load_chain, load_dataset, persist_chain, read_results, save_dataset, write_results, XFormat};
use mobs::{fit_baseline, screen, simulate, ChainConfig, Hyperparams, ResponseTransform, ScreenConfig, SimModel, SimSpec};

fn main() -> mobs::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| mobs::Error::Internal(e.to_string()))?;
    let p = |name: &str| dir.path().join(name);

    let inst = simulate(&SimSpec::new(SimModel::Mixture, 100, 20, 3))?;
    save_dataset(&inst.dataset, &p("y.txt"), &p("x.csv"), XFormat::Csv)?;
    save_dataset(&inst.dataset, &p("y.txt"), &p("x.mobx"), XFormat::Packed)?;
    let from_csv = load_dataset(&p("y.txt"), &p("x.csv"), XFormat::Csv, None)?;
    let from_packed = load_dataset(&p("y.txt"), &p("x.mobx"), XFormat::Packed, None)?;
    println!("csv and packed datasets equal: {}", from_csv == from_packed);

    let y = inst.dataset.y();
    let hp = Hyperparams::defaults(3);
    let cfg = ChainConfig {
        total_iters: 500,
        burn_in: 400,
        keep: 100,
        ..ChainConfig::default()
    };
    let chain = fit_baseline(y, &hp, &cfg, ResponseTransform::standardizing(y))?;
    persist_chain(&chain, &p("chain.txt"))?;
    let reloaded = load_chain(&p("chain.txt"))?;
    println!("chain draws identical after reload: {}", reloaded.draws == chain.draws);

    let result = screen(&from_packed, &reloaded, &hp, &ScreenConfig::default())?;
    write_results(&result, Some(3), &p("results.csv"))?;
    let back = read_results(&p("results.csv"))?;
    println!("results identical after reload: {}", back.result == result);

    let text = std::fs::read_to_string(p("results.csv")).map_err(|e| mobs::Error::Internal(e.to_string()))?;
    for line in text.lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
