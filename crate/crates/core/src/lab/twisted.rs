//! Unit-time twisted chain of a stationary pair and its return functionals.
//!
//! With `K = K(1)` the Feynman-Kac matrix, `r_hat(i) = ln sum_j K[i][j]` and
//! the twisted kernel is `P~(i -> j) = K[i][j] / sum_j K[i][j]`.

use super::semigroup::feynman_kac;
use super::sim::path_rng;
use super::{LabError, McEstimate};
use crate::linalg::{perron_root, solve};
use crate::model::{GameModel, LyapunovCertificate, MixedAction};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct TwistedChain {
    pub kernel: DMatrix<f64>,
    pub r_hat: Vec<f64>,
    pub v1: Vec<MixedAction>,
    pub v2: Vec<MixedAction>,
}

pub fn build_twisted_chain(
    model: &GameModel,
    v1: &[MixedAction],
    v2: &[MixedAction],
) -> Result<TwistedChain, LabError> {
    let k = feynman_kac(model, v1, v2, 1.0)?;
    let n = k.nrows();
    let mut kernel = k.clone();
    let mut r_hat = vec![0.0; n];
    for i in 0..n {
        let s: f64 = k.row(i).sum();
        r_hat[i] = s.ln();
        for j in 0..n {
            kernel[(i, j)] = k[(i, j)] / s;
        }
        debug_assert!((kernel.row(i).sum() - 1.0).abs() < 1e-10);
    }
    Ok(TwistedChain {
        kernel,
        r_hat,
        v1: v1.to_vec(),
        v2: v2.to_vec(),
    })
}

/// First-passage system `g = B g + c` off the target set `A`: `B[j][k] = w(j) P~(j, k)`
/// for `j, k` outside `A`, `c[j] = w(j) P~(j, A)`, with per-step weights `w`.
/// Returns `w(start) [P~(start, A) + sum_{k not in A} P~(start, k) g(k)]`, the
/// weighted functional up to the first `n >= 1` with `Y~_n` in `A`, and the
/// spectral radius of `B`.
fn passage_functional(chain: &TwistedChain, start: usize, in_target: &[bool], weight: &[f64]) -> (Option<f64>, f64) {
    let n = chain.kernel.nrows();
    let p = &chain.kernel;
    let rest: Vec<usize> = (0..n).filter(|&j| !in_target[j]).collect();
    let into = |j: usize| (0..n).filter(|&k| in_target[k]).map(|k| p[(j, k)]).sum::<f64>();
    let close =
        |g: &[f64]| weight[start] * (into(start) + rest.iter().zip(g).map(|(&k, gk)| p[(start, k)] * gk).sum::<f64>());
    if rest.is_empty() {
        return (Some(close(&[])), 0.0);
    }
    let m = rest.len();
    let b = DMatrix::from_fn(m, m, |a, c| weight[rest[a]] * p[(rest[a], rest[c])]);
    let radius = match perron_root(&b, 1e-13) {
        Ok(x) => x.root,
        Err(x) => x.hi,
    };
    if radius >= 1.0 - 1e-12 {
        return (None, radius);
    }
    let c = DVector::from_fn(m, |a, _| weight[rest[a]] * into(rest[a]));
    let lhs = DMatrix::identity(m, m) - b;
    match solve(lhs, &c) {
        Some(g) => (Some(close(g.as_slice())), radius),
        None => (None, radius),
    }
}

fn return_functional(chain: &TwistedChain, target: usize, weight: &[f64]) -> (Option<f64>, f64) {
    let mut in_target = vec![false; chain.kernel.nrows()];
    in_target[target] = true;
    passage_functional(chain, target, &in_target, weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DMethod {
    LinearSolve,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DReport {
    pub value: f64,
    pub method: DMethod,
    /// Spectral radius of the weighted kernel restricted off the start state.
    pub spectral_radius: f64,
    /// Monte Carlo standard error (zero for the linear solve).
    pub stderr: f64,
}

/// `D(rho) = E~_i[exp(sum_{n=1}^{tau~} (r_hat(Y~_n) - rho))]`, `tau~` the
/// first return time to `i`.
pub fn d_of_rho(chain: &TwistedChain, rho: f64, i: usize) -> Result<DReport, LabError> {
    let n = chain.kernel.nrows();
    if i >= n {
        return Err(LabError::BadParameter(format!("state {i} out of range")));
    }
    let weight: Vec<f64> = chain.r_hat.iter().map(|r| (r - rho).exp()).collect();
    let (value, radius) = return_functional(chain, i, &weight);
    if let Some(value) = value {
        return Ok(DReport {
            value,
            method: DMethod::LinearSolve,
            spectral_radius: radius,
            stderr: 0.0,
        });
    }
    // heavy-tailed regime: simulate returns with a step cap
    const PATHS: usize = 10_000;
    const CAP: usize = 100_000;
    let draws: Vec<(f64, bool)> = (0..PATHS as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(0x7d15_ea5e, k);
            let (mut state, mut log_w) = (i, 0.0);
            for _ in 0..CAP {
                let u: f64 = rng.random();
                let row = chain.kernel.row(state);
                let mut acc = 0.0;
                let mut next = n - 1;
                for j in 0..n {
                    acc += row[j];
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                state = next;
                log_w += chain.r_hat[state] - rho;
                if state == i {
                    return (log_w.exp(), false);
                }
            }
            (log_w.exp(), true)
        })
        .collect();
    let truncated = draws.iter().filter(|d| d.1).count();
    let est = McEstimate::from_samples(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
    if truncated > 0 || !est.mean.is_finite() {
        return Err(LabError::SeriesDiverges {
            estimate: est.mean,
            truncated,
            paths: PATHS,
        });
    }
    Ok(DReport {
        value: est.mean,
        method: DMethod::MonteCarlo,
        spectral_radius: radius,
        stderr: est.stderr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMomentEntry {
    pub state: usize,
    /// `E~_i[exp(delta tau~ / 2)]`, `None` when infinite.
    pub moment: Option<f64>,
    /// `e^{-delta/2} (W(i) + b e^{3 delta / 2})`.
    pub bound: f64,
    /// `bound - moment` (negative infinity when the moment is infinite).
    pub margin: f64,
    /// Same moment with the return time replaced by the first `n >= 1` with
    /// `Y~_n` in the certificate set `C`; diagnostic only.
    pub c_hit_moment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMomentReport {
    /// `{i : W(i) >= 1 + b e^{3 delta / 2} / (e^{delta / 2} - 1)}`.
    pub c0: Vec<usize>,
    pub threshold: f64,
    pub entries: Vec<ReturnMomentEntry>,
    pub worst_margin: f64,
}

/// Return-time exponential moment `E~_i[exp(delta tau~ / 2)]` on the twisted chain.
pub fn return_moment(chain: &TwistedChain, i: usize, delta: f64) -> Result<f64, LabError> {
    let w = vec![(delta / 2.0).exp(); chain.kernel.nrows()];
    match return_functional(chain, i, &w) {
        (Some(v), _) => Ok(v),
        (None, radius) => Err(LabError::MomentInfinite { abscissa: radius - 1.0 }),
    }
}

/// Evaluates the return-moment bound at every state of `C0`.
pub fn return_moment_check(chain: &TwistedChain, cert: &LyapunovCertificate) -> Result<ReturnMomentReport, LabError> {
    let n = chain.kernel.nrows();
    if cert.w.len() != n {
        return Err(LabError::BadParameter(
            "certificate size does not match the chain".into(),
        ));
    }
    let d = cert.delta;
    let threshold = 1.0 + cert.b * (1.5 * d).exp() / ((0.5 * d).exp() - 1.0);
    let c0: Vec<usize> = (0..n).filter(|&i| cert.w[i] >= threshold).collect();
    let mut entries = Vec::new();
    for &i in &c0 {
        let bound = (-0.5 * d).exp() * (cert.w[i] + cert.b * (1.5 * d).exp());
        let moment = match return_moment(chain, i, d) {
            Ok(v) => Some(v),
            Err(LabError::MomentInfinite { .. }) => None,
            Err(e) => return Err(e),
        };
        let margin = moment.map_or(f64::NEG_INFINITY, |m| bound - m);
        let mut in_c = vec![false; n];
        for &c in &cert.c {
            in_c[c] = true;
        }
        let w = vec![(0.5 * d).exp(); n];
        entries.push(ReturnMomentEntry {
            state: i,
            moment,
            bound,
            margin,
            c_hit_moment: passage_functional(chain, i, &in_c, &w).0,
        });
    }
    let worst_margin = entries.iter().map(|e| e.margin).fold(f64::INFINITY, f64::min);
    Ok(ReturnMomentReport {
        c0,
        threshold,
        entries,
        worst_margin,
    })
}
