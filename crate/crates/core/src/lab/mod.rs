//! Path simulation, Monte Carlo estimators and the exact semigroup and
//! twisted-chain computations the solvers are checked against.
//!
//! Random streams: every path `k` of a run with seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `k`, so results do not
//! depend on thread count or scheduling.

pub mod dpp;
pub mod semigroup;
pub mod sim;
pub mod twisted;

use crate::model::ModelError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dpp::{multiplicative_dpp_check, DppReport};
pub use semigroup::{exp_hitting_moment, feynman_kac};
pub use sim::{
    estimate_discounted, estimate_ergodic_growth, simulate_path, DiscountedEstimate, GrowthEstimate, JumpLayout,
    PathSample, Sampler,
};
pub use twisted::{build_twisted_chain, d_of_rho, return_moment_check, DReport, ReturnMomentReport, TwistedChain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("uniformization series did not produce a finite matrix")]
    SeriesTruncationOverflow,
    #[error(
        "return functional diverges (Monte Carlo estimate {estimate}, {truncated} of {paths} paths hit the step cap)"
    )]
    SeriesDiverges {
        estimate: f64,
        truncated: usize,
        paths: usize,
    },
    #[error("exponential moment is infinite (spectral abscissa {abscissa} >= 0)")]
    MomentInfinite { abscissa: f64 },
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    /// Sequential two-pass summation in input order.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }

    /// `|mean - target| <= k * stderr`, with a floor for deterministic samples.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * target.abs().max(1.0)
    }
}
