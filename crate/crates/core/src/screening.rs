//! Stage two: Bayes factors for every predictor and retained draw, the
//! empirical-Bayes fixed point for the hypothesis prior `κ`, and the
//! order-statistic selection rule.
//!
//! Predictors are processed in fixed-size chunks on a rayon pool. Partial
//! sums are reduced in chunk order, so results do not depend on the number
//! of worker threads.

use std::borrow::Cow;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::bayes_factors::{cell_log_marginal, floor_weights, probs_from_log_masses, LogBFTriple};
use crate::error::{Error, Result};
use crate::gibbs::{mean_var, ChainOutput};
use crate::model::{validate_kappa, Dataset, Degeneracy, HypothesisProbs, Hyperparams};
use crate::prior::level_variance_prior;
use crate::special::ln_gamma;

pub mod spill;

/// Table memory ceiling across all draws.
const TABLE_BYTES_LIMIT: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenConfig {
    /// Max-norm tolerance on successive `κ` iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting hypothesis prior.
    pub kappa0: [f64; 4],
    pub threads: usize,
    /// Predictors per work chunk.
    pub chunk_size: usize,
    /// Bytes the Bayes-factor cache may hold in memory (32 per predictor and
    /// draw) before spilling to disk.
    pub mem_budget: usize,
    /// Directory for spill files; a fresh temporary directory when `None`.
    pub spill_dir: Option<PathBuf>,
    pub solver: KappaSolver,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig {
            tol: 1e-8,
            max_iter: 200,
            kappa0: [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0],
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            chunk_size: 256,
            mem_budget: 1 << 30,
            spill_dir: None,
            solver: KappaSolver::default(),
        }
    }
}

impl ScreenConfig {
    pub fn validate(&self) -> Result<()> {
        validate_kappa(&self.kappa0)?;
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid("tol must be > 0"));
        }
        if self.threads == 0 || self.chunk_size == 0 {
            return Err(Error::invalid("threads and chunk_size must be >= 1"));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))
    }
}

enum Storage {
    /// One buffer per chunk.
    Memory(Vec<Vec<f64>>),
    Spilled {
        _dir: Option<tempfile::TempDir>,
        files: Vec<PathBuf>,
    },
}

/// `(log_bf11, log_bf12)` for every non-degenerate predictor and retained
/// draw, stored chunk by chunk in predictor-major, draw-minor order.
pub struct BFCache {
    predictors: Vec<usize>,
    draws: usize,
    chunk_size: usize,
    storage: Storage,
}

impl std::fmt::Debug for BFCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BFCache")
            .field("rows", &self.predictors.len())
            .field("draws", &self.draws)
            .field("chunk_size", &self.chunk_size)
            .field("spilled", &self.is_spilled())
            .finish()
    }
}

impl BFCache {
    /// Original predictor index of each cached row.
    pub fn predictors(&self) -> &[usize] {
        &self.predictors
    }

    pub fn rows(&self) -> usize {
        self.predictors.len()
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn n_chunks(&self) -> usize {
        self.rows().div_ceil(self.chunk_size)
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self.storage, Storage::Spilled { .. })
    }

    fn chunk_rows(&self, c: usize) -> std::ops::Range<usize> {
        let start = c * self.chunk_size;
        start..(start + self.chunk_size).min(self.rows())
    }

    /// Interleaved `(log_bf11, log_bf12)` pairs of chunk `c`.
    pub fn chunk(&self, c: usize) -> Result<Cow<'_, [f64]>> {
        match &self.storage {
            Storage::Memory(chunks) => Ok(Cow::Borrowed(&chunks[c])),
            Storage::Spilled { files, .. } => {
                let chunk = spill::read_chunk(&files[c])?;
                let rows = self.chunk_rows(c);
                if chunk.start as usize != rows.start || chunk.len as usize != rows.len() || chunk.draws as usize != self.draws {
                    return Err(Error::Format {
                        line: 0,
                        msg: format!("spill file {} does not match its chunk", files[c].display()),
                    });
                }
                Ok(Cow::Owned(chunk.values))
            }
        }
    }

    /// Log Bayes factors of cached row `row` under draw `s`.
    pub fn triple(&self, row: usize, s: usize) -> Result<LogBFTriple> {
        let c = row / self.chunk_size;
        let local = row - c * self.chunk_size;
        let data = self.chunk(c)?;
        let at = 2 * (local * self.draws + s);
        Ok(LogBFTriple {
            log_bf11: data[at],
            log_bf12: data[at + 1],
        })
    }
}

/// Per-draw quantities shared by every predictor.
struct DrawContext {
    allocations: Vec<u32>,
    /// `y_i − μ_{c_i}`
    residuals: Vec<f64>,
    /// `−Σ_h n_h ln ω_h`
    const11: f64,
    /// `Σ_h [½ n_h ln σ²_h + Σ_{c_i=h} (y_i − μ_h)² / (2σ²_h)]`
    const12: f64,
    prior11: Vec<f64>,
    prior_total: f64,
    shape: Vec<f64>,
    rate: Vec<f64>,
    ln_rate: Vec<f64>,
    /// `ln Γ(m + τω ω_h) − ln Γ(τω ω_h)`, row-major `h × (cap + 1)`.
    t11: Vec<f64>,
    /// `ln Γ(m + τω) − ln Γ(τω)`.
    tsum: Vec<f64>,
    /// `ln Γ(a_h + m/2) − ln Γ(a_h)`.
    t12: Vec<f64>,
}

struct Tables {
    cap: usize,
    /// `½ (ln τμ − ln(τμ + m))`
    tau: Vec<f64>,
    tau_mu: f64,
}

impl Tables {
    #[inline]
    fn tau_term(&self, m: usize) -> f64 {
        if m <= self.cap {
            self.tau[m]
        } else {
            0.5 * (self.tau_mu.ln() - (self.tau_mu + m as f64).ln())
        }
    }
}

#[inline]
fn ln_gamma_shift(base: f64, m: f64) -> f64 {
    ln_gamma(m + base) - ln_gamma(base)
}

impl DrawContext {
    fn new(y: &[f64], draw: &crate::model::MixtureDraw, hp: &Hyperparams, cap: usize) -> Self {
        let k = draw.k();
        let w = floor_weights(&draw.weights);
        let prior11: Vec<f64> = w.iter().map(|&wh| hp.tau_omega * wh).collect();
        let prior_total: f64 = prior11.iter().sum();
        let mut counts = vec![0usize; k];
        let mut dev = vec![0.0; k];
        let mut residuals = Vec::with_capacity(y.len());
        for (&yi, &c) in y.iter().zip(&draw.allocations) {
            let r = yi - draw.means[c];
            residuals.push(r);
            counts[c] += 1;
            dev[c] += r * r;
        }
        let mut const11 = 0.0;
        let mut const12 = 0.0;
        let mut shape = Vec::with_capacity(k);
        let mut rate = Vec::with_capacity(k);
        for h in 0..k {
            let n = counts[h] as f64;
            const11 -= n * w[h].ln();
            if counts[h] > 0 {
                const12 += 0.5 * n * draw.variances[h].ln() + dev[h] / (2.0 * draw.variances[h]);
            }
            let (a, b) = level_variance_prior(hp.tau_sigma, draw.variances[h]);
            shape.push(a);
            rate.push(b);
        }
        let width = cap + 1;
        let mut t11 = Vec::with_capacity(k * width);
        let mut t12 = Vec::with_capacity(k * width);
        for h in 0..k {
            t11.extend((0..width).map(|m| ln_gamma_shift(prior11[h], m as f64)));
            t12.extend((0..width).map(|m| ln_gamma_shift(shape[h], 0.5 * m as f64)));
        }
        let ln_rate = rate.iter().map(|r: &f64| r.ln()).collect();
        let tsum = (0..width).map(|m| ln_gamma_shift(prior_total, m as f64)).collect();
        DrawContext {
            allocations: draw.allocations.iter().map(|&c| c as u32).collect(),
            residuals,
            const11,
            const12,
            prior11,
            prior_total,
            shape,
            rate,
            ln_rate,
            t11,
            tsum,
            t12,
        }
    }

    #[inline]
    fn t11(&self, h: usize, m: usize, cap: usize) -> f64 {
        if m <= cap {
            self.t11[h * (cap + 1) + m]
        } else {
            ln_gamma_shift(self.prior11[h], m as f64)
        }
    }

    #[inline]
    fn tsum(&self, m: usize, cap: usize) -> f64 {
        if m <= cap {
            self.tsum[m]
        } else {
            ln_gamma_shift(self.prior_total, m as f64)
        }
    }

    #[inline]
    fn t12(&self, h: usize, m: usize, cap: usize) -> f64 {
        if m <= cap {
            self.t12[h * (cap + 1) + m]
        } else {
            ln_gamma_shift(self.shape[h], 0.5 * m as f64)
        }
    }
}

struct Scratch {
    counts: Vec<usize>,
    sums: Vec<f64>,
    sumsq: Vec<f64>,
}

/// Both log Bayes factors for one predictor column under one draw.
fn predictor_bfs(column: &[u8], d: usize, ctx: &DrawContext, tables: &Tables, scratch: &mut Scratch) -> (f64, f64) {
    let k = ctx.shape.len();
    let cells = k * d;
    let counts = &mut scratch.counts[..cells];
    let sums = &mut scratch.sums[..cells];
    let sumsq = &mut scratch.sumsq[..cells];
    counts.fill(0);
    sums.fill(0.0);
    sumsq.fill(0.0);
    for ((&x, &c), &r) in column.iter().zip(&ctx.allocations).zip(&ctx.residuals) {
        let cell = c as usize * d + x as usize;
        counts[cell] += 1;
        sums[cell] += r;
        sumsq[cell] += r * r;
    }
    let cap = tables.cap;
    let mut bf11 = ctx.const11;
    for l in 0..d {
        let mut level_total = 0;
        for h in 0..k {
            let m = counts[h * d + l];
            level_total += m;
            bf11 += ctx.t11(h, m, cap);
        }
        bf11 -= ctx.tsum(level_total, cap);
    }
    let mut bf12 = ctx.const12;
    for h in 0..k {
        for l in 0..d {
            let cell = h * d + l;
            let m = counts[cell];
            if m == 0 {
                continue;
            }
            bf12 += cell_log_marginal(
                m,
                sums[cell],
                sumsq[cell],
                ctx.shape[h],
                ctx.rate[h],
                ctx.ln_rate[h],
                tables.tau_mu,
                ctx.t12(h, m, cap) + tables.tau_term(m),
            );
        }
    }
    (bf11, bf12)
}

fn check_inputs(dataset: &Dataset, chain: &ChainOutput, hp: &Hyperparams) -> Result<()> {
    hp.validate()?;
    if chain.draws.is_empty() {
        return Err(Error::InvalidInput("chain has no retained draws".into()));
    }
    for (s, draw) in chain.draws.iter().enumerate() {
        if draw.n() != dataset.n() {
            return Err(Error::InvalidInput(format!(
                "draw {} covers {} subjects, dataset has {}",
                s + 1,
                draw.n(),
                dataset.n()
            )));
        }
        if draw.k() != hp.k {
            return Err(Error::InvalidInput(format!(
                "draw {} has {} components, hyperparameters specify k = {}",
                s + 1,
                draw.k(),
                hp.k
            )));
        }
        draw.validate()?;
    }
    Ok(())
}

/// Computes the Bayes-factor cache for all non-degenerate predictors.
///
/// The response is `dataset.y()` passed through `chain.transform`.
pub fn compute_bf_cache(dataset: &Dataset, chain: &ChainOutput, hp: &Hyperparams, cfg: &ScreenConfig) -> Result<BFCache> {
    cfg.validate()?;
    check_inputs(dataset, chain, hp)?;
    let predictors: Vec<usize> = (0..dataset.p()).filter(|&j| dataset.degeneracy(j).is_none()).collect();
    let y = chain.transform.apply(dataset.y());
    let pool = cfg.pool()?;
    pool.install(|| build_cache(dataset, &y, chain, hp, cfg, predictors))
}

fn build_cache(
    dataset: &Dataset,
    y: &[f64],
    chain: &ChainOutput,
    hp: &Hyperparams,
    cfg: &ScreenConfig,
    predictors: Vec<usize>,
) -> Result<BFCache> {
    let n = dataset.n();
    let draws = chain.draws.len();
    let k = hp.k;
    let d_max = predictors.iter().map(|&j| dataset.levels()[j] as usize).max().unwrap_or(2);

    // Tables only pay off once enough predictors reuse them.
    let per_draw_entries = (2 * k + 1) * (n + 1);
    let cap = if predictors.len() * d_max >= n && draws * per_draw_entries * 8 <= TABLE_BYTES_LIMIT {
        n
    } else if predictors.len() * d_max >= n {
        (TABLE_BYTES_LIMIT / (draws * (2 * k + 1) * 8)).saturating_sub(1).min(n)
    } else {
        0
    };
    let tables = Tables {
        cap,
        tau: (0..=cap)
            .map(|m| 0.5 * (hp.tau_mu.ln() - (hp.tau_mu + m as f64).ln()))
            .collect(),
        tau_mu: hp.tau_mu,
    };
    let (_, y_var) = mean_var(y);
    for (s, draw) in chain.draws.iter().enumerate() {
        if let Some(h) = draw.variances.iter().position(|&v| v < 1e-8 * y_var) {
            log::warn!(
                "draw {}: component {} variance {:e} is below 1e-8 x var(y); level priors are extremely tight",
                s + 1,
                h + 1,
                draw.variances[h]
            );
        }
    }
    let contexts: Vec<DrawContext> = chain.draws.par_iter().map(|d| DrawContext::new(y, d, hp, cap)).collect();

    let rows = predictors.len();
    let n_chunks = rows.div_ceil(cfg.chunk_size);
    // Log Bayes factors plus their encoded factors: four f64 per entry.
    let spill = rows * draws * 32 > cfg.mem_budget;
    let (tmp, spill_root) = if spill {
        match &cfg.spill_dir {
            Some(p) => (None, p.clone()),
            None => {
                let t = tempfile::Builder::new()
                    .prefix("mobs-spill")
                    .tempdir()
                    .map_err(|e| Error::io(std::env::temp_dir(), e))?;
                let p = t.path().to_path_buf();
                (Some(t), p)
            }
        }
    } else {
        (None, PathBuf::new())
    };

    let compute_chunk = |c: usize| -> Result<Vec<f64>> {
        let start = c * cfg.chunk_size;
        let end = (start + cfg.chunk_size).min(rows);
        let mut out = vec![0.0; 2 * (end - start) * draws];
        let mut scratch = Scratch {
            counts: vec![0; k * d_max],
            sums: vec![0.0; k * d_max],
            sumsq: vec![0.0; k * d_max],
        };
        // Draw-major so one draw's tables stay cached across the chunk.
        for (s, ctx) in contexts.iter().enumerate() {
            for (local, &j) in predictors[start..end].iter().enumerate() {
                let column = dataset.column(j);
                let d = dataset.levels()[j] as usize;
                let (bf11, bf12) = predictor_bfs(column, d, ctx, &tables, &mut scratch);
                if !(bf11.is_finite() && bf12.is_finite()) {
                    return Err(Error::Numeric {
                        context: format!("predictor {}, draw {}", j + 1, s + 1),
                        msg: format!("non-finite log Bayes factors ({bf11}, {bf12})"),
                    });
                }
                let at = 2 * (local * draws + s);
                out[at] = bf11;
                out[at + 1] = bf12;
            }
        }
        Ok(out)
    };

    let storage = if spill {
        let files = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let values = compute_chunk(c)?;
                let start = c * cfg.chunk_size;
                let len = (cfg.chunk_size).min(rows - start);
                let path = spill_root.join(format!("chunk-{c:08}.mbsc"));
                spill::write_chunk(&path, start as u64, len as u64, draws as u64, &values)?;
                Ok(path)
            })
            .collect::<Result<Vec<_>>>()?;
        Storage::Spilled { _dir: tmp, files }
    } else {
        Storage::Memory((0..n_chunks).into_par_iter().map(compute_chunk).collect::<Result<Vec<_>>>()?)
    };
    Ok(BFCache {
        predictors,
        draws,
        chunk_size: cfg.chunk_size,
        storage,
    })
}

/// `exp(−|b|)`, negated when `b < 0`. Encodes both normalized factors of
/// `(1, e^b)` in one number, so `κ` updates need no further `exp`.
#[inline]
fn encode(b: f64) -> f64 {
    let g = (-b.abs()).exp();
    if b < 0.0 {
        -g
    } else {
        g
    }
}

/// `(1, e^b) / max(1, e^b)` from [`encode`].
#[inline]
fn decode(g: f64) -> (f64, f64) {
    // Bit-mask select: the signs are data-dependent, so branches mispredict.
    let bits = g.to_bits();
    let mask = 0u64.wrapping_sub(bits >> 63);
    let mag = bits & !(1 << 63);
    let one = 1.0f64.to_bits();
    (f64::from_bits((one & mask) | (mag & !mask)), f64::from_bits((mag & mask) | (one & !mask)))
}

fn encode_chunk(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|&b| encode(b)).collect()
}

/// Hypothesis probabilities for one draw. Since `BF13 = BF11 · BF12`, the
/// four unnormalized masses factor into the decoded pairs.
#[inline]
fn encoded_probs(g11: f64, g12: f64, raw: impl FnOnce() -> (f64, f64), kappa: &[f64; 4]) -> [f64; 4] {
    let (a0, a1) = decode(g11);
    let (c0, c1) = decode(g12);
    let mut w = [kappa[0] * a0 * c0, kappa[1] * a1 * c0, kappa[2] * a0 * c1, kappa[3] * a1 * c1];
    let total: f64 = w.iter().sum();
    if total > 1e-280 {
        let inv = 1.0 / total;
        for v in w.iter_mut() {
            *v *= inv;
        }
        w
    } else {
        // Only reachable when some κ entries are vanishingly small.
        let (bf11, bf12) = raw();
        let masses = [
            kappa[0].ln(),
            kappa[1].ln() + bf11,
            kappa[2].ln() + bf12,
            kappa[3].ln() + bf11 + bf12,
        ];
        probs_from_log_masses(masses)
            .map(|p| p.as_array())
            .unwrap_or([f64::NAN; 4])
    }
}

#[cfg(test)]
fn pair_probs(bf11: f64, bf12: f64, kappa: &[f64; 4]) -> [f64; 4] {
    encoded_probs(encode(bf11), encode(bf12), || (bf11, bf12), kappa)
}

/// Per-row draw-averaged probabilities of one chunk.
fn chunk_row_means(raw: &[f64], encoded: &[f64], draws: usize, kappa: &[f64; 4]) -> Vec<[f64; 4]> {
    encoded
        .chunks_exact(2 * draws)
        .enumerate()
        .map(|(row, enc)| {
            let base = row * 2 * draws;
            // Fast pass without the log-space fallback; rows that would need
            // it are redone entry by entry in the same order.
            let (acc, clean) = fast_row_sum(enc, kappa);
            let acc = if clean {
                acc
            } else {
                let mut acc = [0.0; 4];
                for (s, g) in enc.chunks_exact(2).enumerate() {
                    let at = base + 2 * s;
                    let p = encoded_probs(g[0], g[1], || (raw[at], raw[at + 1]), kappa);
                    for t in 0..4 {
                        acc[t] += p[t];
                    }
                }
                acc
            };
            acc.map(|v| v / draws as f64)
        })
        .collect()
}

#[inline(always)]
fn fast_probs(g11: f64, g12: f64, kappa: &[f64; 4]) -> ([f64; 4], f64) {
    let (a0, a1) = decode(g11);
    let (c0, c1) = decode(g12);
    let w = [kappa[0] * a0 * c0, kappa[1] * a1 * c0, kappa[2] * a0 * c1, kappa[3] * a1 * c1];
    let total = w[0] + w[1] + w[2] + w[3];
    let inv = 1.0 / total;
    (w.map(|v| v * inv), total)
}

/// Sum of per-draw probabilities over one row, using two interleaved
/// accumulators. The flag is false when some draw needs the log-space path.
#[inline]
fn fast_row_sum(enc: &[f64], kappa: &[f64; 4]) -> ([f64; 4], bool) {
    let mut even = [0.0; 4];
    let mut odd = [0.0; 4];
    let mut clean = true;
    let mut quads = enc.chunks_exact(4);
    for g in &mut quads {
        let (p, t0) = fast_probs(g[0], g[1], kappa);
        let (q, t1) = fast_probs(g[2], g[3], kappa);
        clean &= (t0 > 1e-280) & (t1 > 1e-280);
        for t in 0..4 {
            even[t] += p[t];
            odd[t] += q[t];
        }
    }
    if let [g0, g1] = *quads.remainder() {
        let (p, t0) = fast_probs(g0, g1, kappa);
        clean &= t0 > 1e-280;
        for t in 0..4 {
            even[t] += p[t];
        }
    }
    let mut acc = [0.0; 4];
    for t in 0..4 {
        acc[t] = even[t] + odd[t];
    }
    (acc, clean)
}

/// A cache plus, when it lives in memory, its encoded factors.
struct Prepared<'a> {
    cache: &'a BFCache,
    encoded: Option<Vec<Vec<f64>>>,
}

impl<'a> Prepared<'a> {
    fn new(cache: &'a BFCache) -> Self {
        let encoded = match &cache.storage {
            Storage::Memory(chunks) => Some(chunks.par_iter().map(|c| encode_chunk(c)).collect()),
            Storage::Spilled { .. } => None,
        };
        Prepared { cache, encoded }
    }

    fn row_means(&self, c: usize, kappa: &[f64; 4]) -> Result<Vec<[f64; 4]>> {
        let raw = self.cache.chunk(c)?;
        let enc = match &self.encoded {
            Some(e) => Cow::Borrowed(e[c].as_slice()),
            None => Cow::Owned(encode_chunk(&raw)),
        };
        Ok(chunk_row_means(&raw, &enc, self.cache.draws, kappa))
    }

    fn averaged(&self, kappa: &[f64; 4]) -> Result<Vec<HypothesisProbs>> {
        let per_chunk = (0..self.cache.n_chunks())
            .into_par_iter()
            .map(|c| self.row_means(c, kappa))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_chunk
            .into_iter()
            .flatten()
            .map(HypothesisProbs::from_array)
            .collect())
    }

    /// One application of the `κ` update: the mean over predictors of the
    /// draw-averaged hypothesis probabilities.
    fn kappa_step(&self, kappa: &[f64; 4]) -> Result<[f64; 4]> {
        let partials = (0..self.cache.n_chunks())
            .into_par_iter()
            .map(|c| {
                let mut acc = [0.0; 4];
                for r in self.row_means(c, kappa)? {
                    for t in 0..4 {
                        acc[t] += r[t];
                    }
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = [0.0; 4];
        for part in partials {
            for t in 0..4 {
                total[t] += part[t];
            }
        }
        let rows = self.cache.rows() as f64;
        let mut next = total.map(|v| v / rows);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                context: "kappa update".into(),
                msg: format!("non-finite iterate {next:?}"),
            });
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        Ok(next)
    }

    fn fixed_point(&self, kappa0: [f64; 4], tol: f64, max_iter: usize, solver: KappaSolver) -> Result<KappaFit> {
        validate_kappa(&kappa0)?;
        let run = FixedPointRun {
            prepared: self,
            tol,
            max_iter,
            history: Vec::new(),
        };
        if self.cache.rows() == 0 {
            return Ok(run.finish(kappa0, true));
        }
        match solver {
            KappaSolver::Plain => run.plain(kappa0),
            KappaSolver::Squarem => run.squarem(kappa0),
        }
    }
}

/// Map evaluations of one fixed-point solve. Every evaluation counts as an
/// iteration; the solve stops once `‖F(κ) − κ‖∞ < tol` and returns `F(κ)`.
struct FixedPointRun<'p, 'a> {
    prepared: &'p Prepared<'a>,
    tol: f64,
    max_iter: usize,
    history: Vec<[f64; 4]>,
}

enum Step {
    Converged([f64; 4]),
    Exhausted([f64; 4]),
    Next([f64; 4]),
}

fn max_change(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl FixedPointRun<'_, '_> {
    fn eval(&mut self, kappa: &[f64; 4]) -> Result<Step> {
        if self.history.len() >= self.max_iter {
            return Ok(Step::Exhausted(*kappa));
        }
        let next = self.prepared.kappa_step(kappa)?;
        self.history.push(next);
        Ok(if max_change(&next, kappa) < self.tol {
            Step::Converged(next)
        } else if self.history.len() >= self.max_iter {
            Step::Exhausted(next)
        } else {
            Step::Next(next)
        })
    }

    fn finish(self, kappa: [f64; 4], converged: bool) -> KappaFit {
        KappaFit {
            kappa,
            iterations: self.history.len(),
            converged,
            history: self.history,
        }
    }

    fn plain(mut self, mut kappa: [f64; 4]) -> Result<KappaFit> {
        loop {
            match self.eval(&kappa)? {
                Step::Converged(k) => return Ok(self.finish(k, true)),
                Step::Exhausted(k) => return Ok(self.finish(k, false)),
                Step::Next(k) => kappa = k,
            }
        }
    }

    /// Squared extrapolation: two map steps, a jump along the fitted
    /// direction, then one stabilizing step. A jump that leaves the simplex
    /// is pulled back towards the plain two-step point.
    fn squarem(mut self, mut kappa: [f64; 4]) -> Result<KappaFit> {
        macro_rules! step {
            ($k:expr) => {
                match self.eval(&$k)? {
                    Step::Converged(k) => return Ok(self.finish(k, true)),
                    Step::Exhausted(k) => return Ok(self.finish(k, false)),
                    Step::Next(k) => k,
                }
            };
        }
        loop {
            let k1 = step!(kappa);
            let k2 = step!(k1);
            let r: Vec<f64> = (0..4).map(|t| k1[t] - kappa[t]).collect();
            let v: Vec<f64> = (0..4).map(|t| k2[t] - 2.0 * k1[t] + kappa[t]).collect();
            let rr: f64 = r.iter().map(|x| x * x).sum();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let mut alpha = if vv > 0.0 { -(rr / vv).sqrt() } else { -1.0 };
            alpha = alpha.min(-1.0);
            let jump = loop {
                let mut cand = [0.0; 4];
                for t in 0..4 {
                    cand[t] = kappa[t] - 2.0 * alpha * r[t] + alpha * alpha * v[t];
                }
                if alpha == -1.0 || cand.iter().all(|x| x.is_finite() && *x >= 0.0) {
                    break cand;
                }
                alpha = (alpha - 1.0) / 2.0;
                if alpha > -1.0 + 1e-12 {
                    alpha = -1.0;
                }
            };
            let s: f64 = jump.iter().map(|x| x.max(0.0)).sum();
            let jump = jump.map(|x| x.max(0.0) / s);
            kappa = step!(jump);
        }
    }
}

/// How the `κ` fixed point is iterated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KappaSolver {
    /// Repeated application of the averaging update.
    Plain,
    /// The same update with squared extrapolation between steps; reaches
    /// the same fixed point in far fewer updates when convergence is slow.
    #[default]
    Squarem,
}

/// Draw-averaged probabilities for every cached row under a fixed `κ`.
pub fn averaged_probs(cache: &BFCache, kappa: &[f64; 4]) -> Result<Vec<HypothesisProbs>> {
    Prepared::new(cache).averaged(kappa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaFit {
    pub kappa: [f64; 4],
    pub iterations: usize,
    pub converged: bool,
    /// `κ` after each iteration.
    pub history: Vec<[f64; 4]>,
}

/// Iterates the empirical-Bayes `κ` update until the max-norm change drops
/// below `tol` or `max_iter` updates have run.
pub fn kappa_fixed_point(cache: &BFCache, kappa0: [f64; 4], tol: f64, max_iter: usize) -> Result<KappaFit> {
    Prepared::new(cache).fixed_point(kappa0, tol, max_iter, KappaSolver::Plain)
}

/// [`kappa_fixed_point`] with a choice of solver.
pub fn kappa_fixed_point_with(
    cache: &BFCache,
    kappa0: [f64; 4],
    tol: f64,
    max_iter: usize,
    solver: KappaSolver,
) -> Result<KappaFit> {
    Prepared::new(cache).fixed_point(kappa0, tol, max_iter, solver)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningResult {
    /// Per-predictor probabilities; `probs[j].p0` is `π̂_j`.
    pub probs: Vec<HypothesisProbs>,
    /// Why a predictor was skipped (`π̂_j = 1`), if it was.
    pub degenerate: Vec<Option<Degeneracy>>,
    pub kappa: [f64; 4],
    pub iterations: usize,
    pub converged: bool,
}

impl ScreeningResult {
    /// `π̂_j` for every predictor.
    pub fn null_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.p0).collect()
    }
}

/// Full second stage: cache, `κ` fixed point, and final draw-averaged
/// probabilities under the converged `κ`.
pub fn screen(dataset: &Dataset, chain: &ChainOutput, hp: &Hyperparams, cfg: &ScreenConfig) -> Result<ScreeningResult> {
    let cache = compute_bf_cache(dataset, chain, hp, cfg)?;
    let pool = cfg.pool()?;
    pool.install(|| {
        let prepared = Prepared::new(&cache);
        let fit = prepared.fixed_point(cfg.kappa0, cfg.tol, cfg.max_iter, cfg.solver)?;
        let rows = prepared.averaged(&fit.kappa)?;
        let mut probs = vec![HypothesisProbs::NULL; dataset.p()];
        for (&j, p) in cache.predictors().iter().zip(rows) {
            probs[j] = p;
        }
        let degenerate = (0..dataset.p()).map(|j| dataset.degeneracy(j)).collect();
        Ok(ScreeningResult {
            probs,
            degenerate,
            kappa: fit.kappa,
            iterations: fit.iterations,
            converged: fit.converged,
        })
    })
}

/// `{j : π̂_j ≤ π̂_(d_n)}` in ascending index order; ties at the threshold
/// are all included.
pub fn select_top(null_probs: &[f64], d_n: usize) -> Result<Vec<usize>> {
    if d_n == 0 || d_n > null_probs.len() {
        return Err(Error::invalid(format!(
            "d_n = {d_n} out of range 1..={}",
            null_probs.len()
        )));
    }
    if null_probs.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN posterior probability"));
    }
    let mut sorted = null_probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[d_n - 1];
    Ok((0..null_probs.len()).filter(|&j| null_probs[j] <= threshold).collect())
}
