//! Joint-distribution checks of the Gibbs conditionals.

use mobs::gibbs::{sample_allocations, sample_components, sample_weights};
use mobs::{run_chain, ChainConfig, Hyperparams, MixtureDraw};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

const N: usize = 5;

fn hp() -> Hyperparams {
    Hyperparams {
        a: 4.0,
        b: 3.0,
        q: 1.0,
        mu0: 0.5,
        alpha: 2.0,
        ..Hyperparams::defaults(2)
    }
}

/// Draw of `(θ, c)` from the prior, built from `rand_distr` only.
fn prior_state(hp: &Hyperparams, r: &mut ChaCha8Rng) -> MixtureDraw {
    let g = Gamma::new(hp.alpha / hp.k as f64, 1.0).unwrap();
    let raw: Vec<f64> = (0..hp.k).map(|_| g.sample(r)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let prec = Gamma::new(hp.a, 1.0 / hp.b).unwrap();
    let variances: Vec<f64> = (0..hp.k).map(|_| 1.0 / prec.sample(r)).collect();
    let means = variances
        .iter()
        .map(|v| Normal::new(hp.mu0, (hp.q * v).sqrt()).unwrap().sample(r))
        .collect();
    let allocations = (0..N).map(|_| if r.random::<f64>() < weights[0] { 0 } else { 1 }).collect();
    MixtureDraw {
        weights,
        means,
        variances,
        allocations,
    }
}

fn draw_y(d: &MixtureDraw, r: &mut ChaCha8Rng) -> Vec<f64> {
    d.allocations
        .iter()
        .map(|&c| Normal::new(d.means[c], d.variances[c].sqrt()).unwrap().sample(r))
        .collect()
}

fn stats(d: &MixtureDraw, y: &[f64]) -> [f64; 6] {
    let n = y.len() as f64;
    [
        d.weights[0],
        d.means[0],
        d.variances[0].ln(),
        y.iter().sum::<f64>() / n,
        y.iter().map(|v| v * v).sum::<f64>() / n,
        d.allocations.iter().filter(|&&c| c == 0).count() as f64 / n,
    ]
}

/// Mean and standard error by batch means.
fn mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches as f64 - 1.0);
    (m, (var / batches as f64).sqrt())
}

#[test]
fn geweke_successive_conditionals_match_the_prior() {
    let hp = hp();
    let draws = 60_000;
    let mut r = ChaCha8Rng::seed_from_u64(12);

    let mut forward = vec![Vec::with_capacity(draws); 6];
    for _ in 0..draws {
        let d = prior_state(&hp, &mut r);
        let y = draw_y(&d, &mut r);
        for (slot, v) in forward.iter_mut().zip(stats(&d, &y)) {
            slot.push(v);
        }
    }

    let mut state = prior_state(&hp, &mut r);
    let mut y = draw_y(&state, &mut r);
    let mut successive = vec![Vec::with_capacity(draws); 6];
    for _ in 0..draws {
        // One sweep in the sampler's order, then fresh data given the state.
        let allocations = sample_allocations(&y, &state, &mut r).unwrap();
        let (means, variances) = sample_components(&y, &allocations, &hp, &mut r).unwrap();
        let weights = sample_weights(&allocations, &hp, &mut r).unwrap();
        state = MixtureDraw {
            weights,
            means,
            variances,
            allocations,
        };
        y = draw_y(&state, &mut r);
        for (slot, v) in successive.iter_mut().zip(stats(&state, &y)) {
            slot.push(v);
        }
    }

    let names = ["w1", "mu1", "ln var1", "mean y", "mean y^2", "share in 1"];
    for i in 0..6 {
        let (a, sa) = mean_se(&forward[i], 100);
        let (b, sb) = mean_se(&successive[i], 100);
        let z = (a - b) / (sa * sa + sb * sb).sqrt();
        assert!(z.abs() < 4.0, "{}: prior {a:.4} ± {sa:.4}, sampler {b:.4} ± {sb:.4}", names[i]);
    }
}

#[test]
fn constant_response_stays_finite() {
    let y = vec![2.5; 40];
    let cfg = ChainConfig {
        total_iters: 500,
        burn_in: 250,
        keep: 250,
        thin: 1,
        seed: 1,
    };
    let chain = run_chain(&y, &Hyperparams::defaults(2), &cfg).unwrap();
    assert!(chain.log_joint.iter().all(|v| v.is_finite()));
    for d in &chain.draws {
        d.validate().unwrap();
        // Occupied components sit on the constant.
        for (h, &w) in d.counts().iter().enumerate() {
            if w > 0 {
                assert!((d.means[h] - 2.5).abs() < 0.05, "{:?}", d.means);
            }
        }
    }
}
