//! Command-line front end. `main` stays a one-liner around [`run_from`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::gibbs::{fit_baseline, ChainConfig, ResponseTransform};
use crate::io::{self, RunManifest, XFormat};
use crate::model::Hyperparams;
use crate::screening::{screen, select_top, KappaSolver, ScreenConfig};
use crate::sim::{self, BlockRows, SimModel, SimSpec};
use crate::tuner::{estimate_snr, DEFAULT_MC_DRAWS};

#[derive(Debug, Parser)]
#[command(name = "mobs", version, about = "Mixture-baseline Bayesian screening of categorical predictors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the baseline mixture to a response and write the retained draws.
    FitBaseline(FitArgs),
    /// Score every predictor against a fitted chain.
    Screen(ScreenArgs),
    /// Report the prior signal-to-noise ratio of a hyperparameter setting.
    TuneSnr(TuneArgs),
    /// Generate a benchmark replicate.
    Simulate(SimulateArgs),
    /// ROC curve and AUC of screening results against a truth file.
    Roc(RocArgs),
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// Number of mixture components.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau_omega: Option<f64>,
    #[arg(long)]
    pub tau_mu: Option<f64>,
    #[arg(long)]
    pub tau_sigma: Option<f64>,
}

impl PriorArgs {
    fn hyperparams(&self, k: usize) -> Result<Hyperparams> {
        let mut hp = Hyperparams::defaults(k);
        if let Some(v) = self.tau_omega {
            hp.tau_omega = v;
        }
        if let Some(v) = self.tau_mu {
            hp.tau_mu = v;
        }
        if let Some(v) = self.tau_sigma {
            hp.tau_sigma = v;
        }
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Response file, one value per line.
    #[arg(long)]
    pub y: PathBuf,
    /// Chain file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value_t = ChainConfig::default().total_iters)]
    pub iters: usize,
    #[arg(long, default_value_t = ChainConfig::default().burn_in)]
    pub burnin: usize,
    #[arg(long, default_value_t = ChainConfig::default().keep)]
    pub keep: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fit the raw response instead of its standardized version.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long)]
    pub y: PathBuf,
    /// Predictor file (CSV, or packed when the extension is .mobx).
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub chain: PathBuf,
    /// Results CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Predictor format; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<XFormat>,
    /// Optional per-predictor level counts.
    #[arg(long)]
    pub levels: Option<PathBuf>,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value_t = default_threads())]
    pub threads: usize,
    #[arg(long, default_value_t = 256)]
    pub chunk_size: usize,
    /// In-memory Bayes-factor budget, e.g. 512M or 2G.
    #[arg(long, default_value = "1G", value_parser = parse_bytes)]
    pub mem_budget: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Iterate κ without extrapolation.
    #[arg(long)]
    pub plain_kappa: bool,
    /// Print the indices of the `top` smallest null probabilities (ties included).
    #[arg(long)]
    pub top: Option<usize>,
    /// Seed recorded in the results metadata.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a run manifest here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Monte Carlo draws.
    #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = default_threads())]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model number 1..=6 (even numbers use a correlated block).
    #[arg(long)]
    pub model: u8,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 600)]
    pub block_size: usize,
    /// Correlate only the first ceil(rho * n) rows of the block.
    #[arg(long)]
    pub leading_rows: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for y.txt, x.csv or x.mobx, and truth.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: XFormat,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Curve CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Byte counts with an optional K, M or G suffix (powers of 1024).
pub fn parse_bytes(s: &str) -> std::result::Result<usize, String> {
    let t = s.trim();
    let (digits, mult) = match t.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&t[..t.len() - 1], 1usize << 10),
        Some('M') => (&t[..t.len() - 1], 1 << 20),
        Some('G') => (&t[..t.len() - 1], 1 << 30),
        _ => (t, 1),
    };
    digits
        .trim()
        .parse::<usize>()
        .ok()
        .and_then(|v| v.checked_mul(mult))
        .ok_or_else(|| format!("invalid byte count {s:?}"))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    if threads == 0 {
        return Err(Error::invalid("--threads must be >= 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitBaseline(a) => fit_cmd(a),
        Command::Screen(a) => screen_cmd(a),
        Command::TuneSnr(a) => tune_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Roc(a) => roc_cmd(a),
    }
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let hp = a.prior.hyperparams(a.prior.k.unwrap_or(3))?;
    let cfg = ChainConfig {
        total_iters: a.iters,
        burn_in: a.burnin,
        keep: a.keep,
        seed: a.seed,
        thin: a.thin,
    };
    let y = io::read_response(&a.y)?;
    let transform = if a.raw {
        ResponseTransform::Identity
    } else {
        ResponseTransform::standardizing(&y)
    };
    let chain = fit_baseline(&y, &hp, &cfg, transform)?;
    io::persist_chain(&chain, &a.out)?;
    log::info!("wrote {} draws to {}", chain.draws.len(), a.out.display());
    Ok(())
}

fn screen_cmd(a: ScreenArgs) -> Result<()> {
    let format = a.format.unwrap_or_else(|| XFormat::from_path(&a.x));
    let dataset = io::load_dataset(&a.y, &a.x, format, a.levels.as_deref())?;
    let chain = io::load_chain(&a.chain)?;
    let k = chain.k();
    if let Some(requested) = a.prior.k {
        if requested != k {
            return Err(Error::invalid(format!("--k {requested} does not match the chain's k = {k}")));
        }
    }
    let hp = a.prior.hyperparams(k)?;
    let cfg = ScreenConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        kappa0: hp.kappa,
        threads: a.threads,
        chunk_size: a.chunk_size,
        mem_budget: a.mem_budget,
        spill_dir: None,
        solver: if a.plain_kappa { KappaSolver::Plain } else { KappaSolver::Squarem },
    };
    let result = screen(&dataset, &chain, &hp, &cfg)?;
    if !result.converged && a.max_iter > 0 {
        log::warn!("kappa did not converge within {} iterations", a.max_iter);
    }
    io::write_results(&result, a.seed, &a.out)?;
    if let Some(path) = &a.manifest {
        RunManifest {
            y_path: a.y.clone(),
            x_path: a.x.clone(),
            levels_path: a.levels.clone(),
            hyperparams: hp,
            chain: ChainConfig {
                seed: a.seed.unwrap_or(0),
                ..ChainConfig::default()
            },
            tol: a.tol,
            max_iter: a.max_iter,
            threads: a.threads,
            mem_budget: a.mem_budget,
            output_dir: a.out.parent().map(PathBuf::from).unwrap_or_default(),
            seed: a.seed.unwrap_or(0),
        }
        .write(path)?;
    }
    if let Some(top) = a.top {
        for j in select_top(&result.null_probs(), top)? {
            println!("{}", j + 1);
        }
    }
    Ok(())
}

fn tune_cmd(a: TuneArgs) -> Result<()> {
    let hp = a.prior.hyperparams(a.prior.k.unwrap_or(3))?;
    let est = pool(a.threads)?.install(|| estimate_snr(&hp, a.draws, a.seed))?;
    println!("k={}", hp.k);
    println!("tau_omega={}", hp.tau_omega);
    println!("tau_mu={}", hp.tau_mu);
    println!("tau_sigma={}", hp.tau_sigma);
    println!("delta0={:.6e}", est.delta0);
    println!("delta1={:.6e}", est.delta1);
    println!("ratio={:.6}", est.ratio);
    println!("ratio_stderr={:.6}", est.mc_stderr_ratio);
    println!("draws={}", est.mc_draws);
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let spec = SimSpec {
        model: SimModel::from_number(a.model)?,
        n: a.n,
        p: a.p,
        rho: a.rho,
        block_size: a.block_size.min(a.p),
        block_rows: if a.leading_rows { BlockRows::Leading } else { BlockRows::All },
        seed: a.seed,
    };
    let inst = sim::simulate(&spec)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let x_name = match a.format {
        XFormat::Csv => "x.csv",
        XFormat::Packed => "x.mobx",
    };
    io::save_dataset(&inst.dataset, &a.out_dir.join("y.txt"), &a.out_dir.join(x_name), a.format)?;
    io::write_truth(&a.out_dir.join("truth.txt"), &inst.truth)?;
    Ok(())
}

fn roc_cmd(a: RocArgs) -> Result<()> {
    let results = io::read_results(&a.results)?;
    let truth = io::read_truth(&a.truth)?;
    let curve = sim::roc_auc(&results.result.null_probs(), &truth)?;
    io::write_roc(&a.out, &curve)?;
    println!("auc={:.6}", curve.auc);
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_suffixes() {
        assert_eq!(parse_bytes("512").unwrap(), 512);
        assert_eq!(parse_bytes("4k").unwrap(), 4096);
        assert_eq!(parse_bytes("2M").unwrap(), 2 << 20);
        assert_eq!(parse_bytes("1G").unwrap(), 1 << 30);
        assert!(parse_bytes("G").is_err());
        assert!(parse_bytes("-1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
