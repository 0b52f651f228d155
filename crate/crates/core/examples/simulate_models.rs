//! Draws one replicate of each simulation model and reports the truth set,
//! the response spread, and the average predictor correlation inside and
//! outside the correlated block.

use mobs::sim::gen_latent_block;
use mobs::{simulate, Dataset, SimModel, SimSpec};

fn corr(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

/// Mean correlation over all pairs of the first `m` listed columns.
fn mean_pair_corr(ds: &Dataset, cols: &[usize], m: usize) -> f64 {
    let cols = &cols[..m.min(cols.len())];
    let mut total = 0.0;
    let mut pairs = 0;
    for (i, &a) in cols.iter().enumerate() {
        for &b in &cols[i + 1..] {
            total += corr(ds.column(a), ds.column(b));
            pairs += 1;
        }
    }
    total / pairs as f64
}

fn main() -> mobs::Result<()> {
    for number in 1..=6 {
        let model = SimModel::from_number(number)?;
        let spec = SimSpec::new(model, 400, 1000, 5);
        let inst = simulate(&spec)?;
        let y = inst.dataset.y();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64).sqrt();
        let truth: Vec<usize> = inst.truth.iter().map(|j| j + 1).collect();
        print!("model {number}: truth {truth:?}  y mean {mean:+.2} sd {sd:.2}");
        if model.correlated() {
            // Same seed and stream as `simulate`, so this is the replicate's block.
            let (_, block) = gen_latent_block(spec.n, spec.p, spec.rho, spec.block_size, spec.block_rows, spec.seed)?;
            let outside: Vec<usize> = (0..spec.p).filter(|j| !block.contains(j)).collect();
            println!(
                "  corr in block {:.3} (median-split target {:.3}), outside {:+.3}",
                mean_pair_corr(&inst.dataset, &block, 40),
                2.0 / std::f64::consts::PI * spec.rho.asin(),
                mean_pair_corr(&inst.dataset, &outside, 40)
            );
        } else {
            let all: Vec<usize> = (0..spec.p).collect();
            println!("  mean pairwise corr {:+.3}", mean_pair_corr(&inst.dataset, &all, 40));
        }
    }
    Ok(())
}
