//! Simulation benchmark: binary predictor generators, the six response
//! models, a marginal-correlation comparator and ROC/AUC evaluation.
//!
//! All predictor matrices are column-major (`x[j * n + i]`), matching
//! [`Dataset`]. Truth sets are 0-based.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::prior::{standard_normal, stream_rng, SIM_X_STREAM, SIM_Y_STREAM};

/// Coefficients of the linear index `1 + 2x1 + x2 − 2x3 + x4 − 2x5`.
const LINEAR: [f64; 5] = [2.0, 1.0, -2.0, 1.0, -2.0];
const MIXTURE_TRUE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimModel {
    /// Linear regression, independent predictors.
    Linear,
    /// Linear regression, correlated block.
    LinearCorrelated,
    /// Squared linear index, independent predictors.
    SingleIndex,
    SingleIndexCorrelated,
    /// 64-cell Gaussian mixture driven by six random predictors.
    Mixture,
    MixtureCorrelated,
}

impl SimModel {
    pub fn from_number(m: u8) -> Result<Self> {
        Ok(match m {
            1 => SimModel::Linear,
            2 => SimModel::LinearCorrelated,
            3 => SimModel::SingleIndex,
            4 => SimModel::SingleIndexCorrelated,
            5 => SimModel::Mixture,
            6 => SimModel::MixtureCorrelated,
            _ => return Err(Error::invalid(format!("model must be 1..=6, got {m}"))),
        })
    }

    pub fn number(self) -> u8 {
        match self {
            SimModel::Linear => 1,
            SimModel::LinearCorrelated => 2,
            SimModel::SingleIndex => 3,
            SimModel::SingleIndexCorrelated => 4,
            SimModel::Mixture => 5,
            SimModel::MixtureCorrelated => 6,
        }
    }

    pub fn correlated(self) -> bool {
        self.number() % 2 == 0
    }

    pub fn truth_size(self) -> usize {
        if self.number() >= 5 {
            MIXTURE_TRUE
        } else {
            LINEAR.len()
        }
    }
}

/// Which rows of a correlated block share the latent factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockRows {
    /// Every row: pairwise latent correlation is exactly `ρ`.
    #[default]
    All,
    /// Only the first `⌈ρ n⌉` rows; the rest stay independent.
    Leading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub model: SimModel,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub block_size: usize,
    pub block_rows: BlockRows,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(model: SimModel, n: usize, p: usize, seed: u64) -> Self {
        SimSpec {
            model,
            n,
            p,
            rho: 0.5,
            block_size: 600.min(p),
            block_rows: BlockRows::All,
            seed,
        }
    }

    pub fn correlated(&self) -> bool {
        self.model.correlated()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        if self.p < MIXTURE_TRUE {
            return Err(Error::invalid(format!("p must be >= {MIXTURE_TRUE}, got {}", self.p)));
        }
        if self.correlated() {
            if !(self.rho > 0.0 && self.rho < 1.0) {
                return Err(Error::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
            }
            if self.block_size > self.p {
                return Err(Error::invalid("block_size exceeds p"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    pub dataset: Dataset,
    /// Jointly important predictors, ascending, 0-based.
    pub truth: Vec<usize>,
}

/// i.i.d. Bernoulli(½) codes.
pub fn gen_uncorrelated_x(n: usize, p: usize, seed: u64) -> Vec<u8> {
    let mut rng = stream_rng(seed, SIM_X_STREAM);
    (0..n * p).map(|_| rng.random::<bool>() as u8).collect()
}

/// Latent Gaussian matrix with a correlated block and the block's columns.
///
/// Block entries are `w_i + a z_ij` with `a = √(1/ρ − 1)` and a shared
/// per-row factor `w_i`, so two block columns have correlation `ρ`.
pub fn gen_latent_block(
    n: usize,
    p: usize,
    rho: f64,
    block_size: usize,
    rows: BlockRows,
    seed: u64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if block_size > p {
        return Err(Error::invalid("block_size exceeds p"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    let mut rng = stream_rng(seed, SIM_X_STREAM);
    let mut block = sample(&mut rng, p, block_size).into_vec();
    block.sort_unstable();
    let shared: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
    let mut latent: Vec<f64> = (0..n * p).map(|_| standard_normal(&mut rng)).collect();
    let a = (1.0 / rho - 1.0).sqrt();
    let affected = match rows {
        BlockRows::All => n,
        BlockRows::Leading => ((rho * n as f64).ceil() as usize).min(n),
    };
    for &j in &block {
        for i in 0..affected {
            let z = &mut latent[j * n + i];
            *z = shared[i] + a * *z;
        }
    }
    Ok((latent, block))
}

/// Splits each column at its empirical median: values above it map to 1.
pub fn dichotomize_median(latent: &[f64], n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(latent.len());
    let mut sorted = Vec::with_capacity(n);
    for col in latent.chunks_exact(n) {
        sorted.clear();
        sorted.extend_from_slice(col);
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        out.extend(col.iter().map(|&v| (v > median) as u8));
    }
    out
}

/// Binary codes with a correlated block, dichotomized at column medians.
pub fn gen_correlated_block(n: usize, p: usize, rho: f64, block_size: usize, rows: BlockRows, seed: u64) -> Result<Vec<u8>> {
    let (latent, _) = gen_latent_block(n, p, rho, block_size, rows, seed)?;
    Ok(dichotomize_median(&latent, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDraw {
    pub y: Vec<f64>,
    /// 0-based, ascending.
    pub truth: Vec<usize>,
    /// Mixture models only: `(μ, σ)` per configuration `Σ_b x_{S_b} 2^b`.
    pub table: Option<Vec<(f64, f64)>>,
}

/// Response for `model` with standard noise.
pub fn gen_response(x: &[u8], n: usize, model: SimModel, seed: u64) -> Result<ResponseDraw> {
    gen_response_with(x, n, model, seed, 1.0)
}

/// Response for `model` with the additive noise scaled by `noise_scale`
/// (linear and single-index models; mixture draws are unaffected).
pub fn gen_response_with(x: &[u8], n: usize, model: SimModel, seed: u64, noise_scale: f64) -> Result<ResponseDraw> {
    if n == 0 || x.len() % n != 0 {
        return Err(Error::invalid("predictor matrix shape does not match n"));
    }
    let p = x.len() / n;
    if p < MIXTURE_TRUE {
        return Err(Error::invalid(format!("p must be >= {MIXTURE_TRUE}, got {p}")));
    }
    if x.iter().any(|&v| v > 1) {
        return Err(Error::invalid("simulation predictors must be binary"));
    }
    let mut rng = stream_rng(seed, SIM_Y_STREAM);
    let index = |i: usize| 1.0 + LINEAR.iter().enumerate().map(|(j, b)| b * x[j * n + i] as f64).sum::<f64>();
    match model.number() {
        1..=4 => {
            let squared = model.number() >= 3;
            let y = (0..n)
                .map(|i| {
                    let eta = index(i);
                    let mean = if squared { eta * eta } else { eta };
                    mean + noise_scale * standard_normal(&mut rng)
                })
                .collect();
            Ok(ResponseDraw {
                y,
                truth: (0..LINEAR.len()).collect(),
                table: None,
            })
        }
        _ => {
            let mut truth = sample(&mut rng, p, MIXTURE_TRUE).into_vec();
            let table: Vec<(f64, f64)> = (0..1usize << MIXTURE_TRUE)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..0.125)))
                .collect();
            // The bit order follows the draw order of the positions.
            let y = (0..n)
                .map(|i| {
                    let config: usize = truth
                        .iter()
                        .enumerate()
                        .map(|(b, &j)| (x[j * n + i] as usize) << b)
                        .sum();
                    let (mu, sigma) = table[config];
                    mu + sigma * standard_normal(&mut rng)
                })
                .collect();
            truth.sort_unstable();
            Ok(ResponseDraw {
                y,
                truth,
                table: Some(table),
            })
        }
    }
}

/// Generates one replicate.
pub fn simulate(spec: &SimSpec) -> Result<SimInstance> {
    spec.validate()?;
    let x = if spec.correlated() {
        gen_correlated_block(spec.n, spec.p, spec.rho, spec.block_size, spec.block_rows, spec.seed)?
    } else {
        gen_uncorrelated_x(spec.n, spec.p, spec.seed)
    };
    let response = gen_response(&x, spec.n, spec.model, spec.seed)?;
    let dataset = Dataset::new(response.y, x, vec![2; spec.p])?;
    Ok(SimInstance {
        dataset,
        truth: response.truth,
    })
}

/// `|corr(x_j, y)|` per predictor; constant columns score 0. Missing
/// values are skipped pairwise.
pub fn marginal_corr_scores(dataset: &Dataset) -> Vec<f64> {
    let y = dataset.y();
    (0..dataset.p())
        .map(|j| {
            let col = dataset.column(j);
            let pairs = col
                .iter()
                .zip(y)
                .filter(|(&x, _)| x != crate::model::MISSING)
                .map(|(&x, &y)| (x as f64, y));
            let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for (x, y) in pairs.clone() {
                n += 1.0;
                sx += x;
                sy += y;
            }
            if n < 2.0 {
                return 0.0;
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut cxy, mut cxx, mut cyy) = (0.0, 0.0, 0.0);
            for (x, y) in pairs {
                cxy += (x - mx) * (y - my);
                cxx += (x - mx) * (x - mx);
                cyy += (y - my) * (y - my);
            }
            if cxx <= 0.0 || cyy <= 0.0 {
                0.0
            } else {
                (cxy / (cxx * cyy).sqrt()).abs().min(1.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Starts at `(0, 0)` with an infinite threshold and ends at `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve where smaller scores rank as more significant. Equal scores
/// enter as one step, so ties count one half in the AUC.
pub fn roc_auc(scores: &[f64], truth: &[usize]) -> Result<RocCurve> {
    let p = scores.len();
    let mut is_true = vec![false; p];
    for &j in truth {
        if j >= p {
            return Err(Error::invalid(format!("truth index {} out of range", j + 1)));
        }
        is_true[j] = true;
    }
    let positives = is_true.iter().filter(|&&t| t).count();
    let negatives = p - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("truth must be a nonempty proper subset"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut at = 0;
    while at < p {
        let threshold = scores[order[at]];
        while at < p && scores[order[at]] == threshold {
            if is_true[order[at]] {
                tp += 1;
            } else {
                fp += 1;
            }
            at += 1;
        }
        let fpr = fp as f64 / negatives as f64;
        let tpr = tp as f64 / positives as f64;
        let last = points.last().unwrap();
        auc += (fpr - last.fpr) * (tpr + last.tpr) / 2.0;
        points.push(RocPoint { threshold, fpr, tpr });
    }
    Ok(RocCurve { points, auc })
}
