//! Two-stage Bayesian screening of categorical predictors.
//!
//! Stage one fits an over-fitted Gaussian mixture to the response alone
//! ([`gibbs::run_chain`]). Stage two asks, for every predictor, whether
//! conditioning on its level changes the mixture weights, the kernels, or
//! both, using closed-form Bayes factors averaged over the retained draws
//! ([`screening::screen`]).
//!
//! ```no_run
//! use mobs::{fit_baseline, screen, ChainConfig, Dataset, Hyperparams, ResponseTransform, ScreenConfig};
//!
//! # fn main() -> mobs::Result<()> {
//! let data = Dataset::from_rows(vec![0.1, 2.3, -0.4, 1.9], &[vec![0], vec![1], vec![0], vec![1]])?;
//! let hp = Hyperparams::defaults(3);
//! let transform = ResponseTransform::standardizing(data.y());
//! let chain = fit_baseline(data.y(), &hp, &ChainConfig::default(), transform)?;
//! let result = screen(&data, &chain, &hp, &ScreenConfig::default())?;
//! println!("{:?}", result.null_probs());
//! # Ok(())
//! # }
//! ```

pub mod bayes_factors;
pub mod cli;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod model;
pub mod prior;
pub mod screening;
pub mod sim;
pub mod special;
pub mod tuner;

pub use bayes_factors::{accumulate_suff_stats, log_bf11, log_bf12, posterior_probs, LevelSuffStats, LogBFTriple};
pub use error::{Error, Result};
pub use gibbs::{fit_baseline, run_chain, ChainConfig, ChainOutput, ResponseTransform};
pub use model::{Dataset, Degeneracy, HypothesisProbs, Hyperparams, MixtureDraw, MISSING};
pub use screening::{
    compute_bf_cache, kappa_fixed_point, kappa_fixed_point_with, screen, select_top, BFCache, KappaFit, KappaSolver, ScreenConfig,
    ScreeningResult,
};
pub use sim::{roc_auc, simulate, SimModel, SimSpec};
pub use tuner::{default_hyperparams, estimate_snr, SnrEstimate};
