//! Long-run (ergodic) risk-sensitive game: find `rho` and `psi_hat > 0` with
//! `psi_hat(i0) = 1` and `rho psi_hat = H(psi_hat)`, where
//! `H(psi)(i) = min_v1 max_v2 [ Pi_v psi(i) + r(i, v) psi(i) ]`.
//!
//! The finite-horizon equation `dpsi/dt = H(psi)`, `psi(0) = 1`, is marched
//! forward with RK4. After every step the iterate is divided by its value at
//! the reference state and the logarithm of that factor is accumulated, so
//! `psi(t) = exp(log_psi_ref(t)) psi_bar(t)` never overflows. `H` is
//! homogeneous of degree one, so the normalized iterate converges to the
//! eigenfunction and `log_psi_ref` grows with slope `rho`.
//!
//! Fixed stationary pairs are checked against the Perron root of
//! `Pi_v + diag(r_v)`.

use crate::hamiltonian::{hamiltonian_eval, hamiltonian_values, ValueFunction};
use crate::linalg::{is_irreducible, perron_root};
use crate::matrix_game::GameError;
use crate::model::{
    bilinear_cost, bilinear_rate, check_lyapunov, check_small_cost, truncate_cost, GameModel, LyapunovCertificate,
    MixedAction, ModelError, Strategy, StrategyProfile,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErgodicError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("step dt = {dt} violates dt (M + ||r||) <= 0.1 (largest stable dt is {max_dt})")]
    StepUnstable { dt: f64, max_dt: f64 },
    #[error("march did not converge by t = {t_max} (last |d rho| = {d_rho}, last |d psi_bar| = {d_psi})")]
    NoConvergence { t_max: f64, d_rho: f64, d_psi: f64 },
    #[error("{gate} gate failed: {detail}")]
    GateFailed { gate: String, detail: String },
    #[error("truncation ladder not monotone: rho at level {level} is {rho}, below {previous} at the previous level")]
    NotMonotone { level: usize, rho: f64, previous: f64 },
    #[error("ergodic residual {residual} exceeds {limit}")]
    Residual { residual: f64, limit: f64 },
    #[error("chain under the given stationary pair is not irreducible")]
    NotIrreducible,
    #[error("power iteration stalled with Perron bracket [{lo}, {hi}]")]
    PowerIterationStalled { lo: f64, hi: f64 },
    #[error("saddle violated by player {player}: margin {margin}")]
    SaddleViolated {
        player: u8,
        strategy: Vec<MixedAction>,
        margin: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicConfig {
    pub t_max: f64,
    /// `None` picks `0.1 / (M + ||r||)`.
    pub dt: Option<f64>,
    /// Per-step change tolerance for both `rho` and `psi_bar`.
    pub tol: f64,
    /// Relative tolerance on `max_i |rho psi_hat - H(psi_hat)|`.
    pub residual_tol: f64,
    /// Slack allowed when checking that `rho` grows along the truncation ladder.
    pub monotone_slack: f64,
    /// Run even when the Lyapunov or small-cost gate fails; recorded in the output.
    pub override_gates: bool,
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        Self {
            t_max: 2000.0,
            dt: None,
            tol: 1e-12,
            residual_tol: 1e-6,
            monotone_slack: 1e-8,
            override_gates: false,
        }
    }
}

impl ErgodicConfig {
    pub fn step_for(&self, model: &GameModel) -> f64 {
        let scale = model.max_exit_rate() + model.cost_sup();
        self.dt.unwrap_or(if scale > 0.0 { 0.1 / scale } else { 0.1 })
    }
}

/// Normalized march state after a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchState {
    pub t: f64,
    /// `psi(t, .) / psi(t, i0)`.
    pub psi_bar: Vec<f64>,
    /// `ln psi(t, i0)`.
    pub log_psi_ref: f64,
    /// Trailing least-squares slope of `log_psi_ref`.
    pub rho_estimate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub lyapunov: Option<bool>,
    pub lyapunov_detail: String,
    pub small_cost: Option<bool>,
    pub small_cost_max_theta: Option<f64>,
    /// `W(i0) >= 1 + b / delta`; informational.
    pub ref_state_condition: Option<bool>,
    pub overridden: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErgodicDiagnostics {
    /// `max_i |rho psi_hat(i) - H(psi_hat)(i)|`.
    pub residual: f64,
    pub residual_limit: f64,
    pub march_time: f64,
    pub steps: usize,
    pub dt: f64,
    /// Windowed slope estimate at the end of the march (`rho` itself is `H(psi_hat)(i0)`).
    pub rho_march: f64,
    /// `rho` at each truncation level of the ladder.
    pub rho_levels: Vec<(usize, f64)>,
    /// Largest `psi_hat(i) / W(i)` when a certificate is known.
    pub w_ratio: Option<f64>,
    pub gates: GateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSolution {
    pub rho: f64,
    pub psi_hat: ValueFunction,
    pub v1_star: Vec<MixedAction>,
    pub v2_star: Vec<MixedAction>,
    pub truncation_level: usize,
    pub diagnostics: ErgodicDiagnostics,
}

fn axpy(y: &[f64], k: &[f64], s: f64) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + s * b).collect()
}

/// One RK4 step of `psi' = H(psi)` from `psi`; `k1` is supplied by the caller.
fn rk4_step(model: &GameModel, psi: &[f64], k1: &[f64], dt: f64) -> Result<Vec<f64>, GameError> {
    let k2 = hamiltonian_values(model, &axpy(psi, k1, 0.5 * dt), 1.0)?;
    let k3 = hamiltonian_values(model, &axpy(psi, &k2, 0.5 * dt), 1.0)?;
    let k4 = hamiltonian_values(model, &axpy(psi, &k3, dt), 1.0)?;
    Ok((0..psi.len())
        .map(|i| psi[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn check_step(model: &GameModel, dt: f64) -> Result<(), ErgodicError> {
    let scale = model.max_exit_rate() + model.cost_sup();
    let max_dt = if scale > 0.0 { 0.1 / scale } else { f64::INFINITY };
    if !(dt > 0.0) {
        return Err(ErgodicError::BadParameter(format!("dt must be positive, got {dt}")));
    }
    if dt * scale > 0.1 * (1.0 + 1e-12) {
        return Err(ErgodicError::StepUnstable { dt, max_dt });
    }
    Ok(())
}

fn w_norm(x: &[f64], y: &[f64], w: Option<&[f64]>) -> f64 {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (a, b))| (a - b).abs() / w.map_or(1.0, |w| w[i]))
        .fold(0.0, f64::max)
}

/// Residual test at the stopping point: a `W`-weighted change norm can be tiny
/// while states with large `W` are still moving.
fn settled(model: &GameModel, psi_bar: &[f64], cfg: &ErgodicConfig) -> Result<bool, GameError> {
    let h = hamiltonian_values(model, psi_bar, 1.0)?;
    let rho = h[model.ref_state];
    let residual = psi_bar
        .iter()
        .zip(&h)
        .map(|(p, x)| (rho * p - x).abs())
        .fold(0.0, f64::max);
    Ok(residual <= 1e-3 * cfg.residual_tol * rho.abs().max(1.0))
}

/// Least-squares slope of equally spaced samples.
fn ls_slope(ys: &[f64], dt: f64) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - xm;
        num += dx * (y - ym);
        den += dx * dx;
    }
    num / den / dt
}

/// Candidate returned by [`march_finite_horizon`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarchOutcome {
    pub state: MarchState,
    pub steps: usize,
    pub dt: f64,
    /// `rho_estimate` sampled once per window.
    pub rho_history: Vec<f64>,
    pub solution: ErgodicSolution,
}

/// Marches the normalized finite-horizon equation until `rho` and `psi_bar`
/// settle. `w` weights the `psi_bar` change norm (`W == 1` when `None`).
pub fn march_finite_horizon(
    model: &GameModel,
    cfg: &ErgodicConfig,
    w: Option<&[f64]>,
) -> Result<MarchOutcome, ErgodicError> {
    let dt = cfg.step_for(model);
    check_step(model, dt)?;
    let n = model.states();
    let i0 = model.ref_state;
    let window = 10usize.max((1.0 / dt).ceil() as usize);

    let mut psi_bar = vec![1.0; n];
    let mut log_ref = 0.0;
    let mut trail: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(window + 1);
    trail.push_back(0.0);
    let mut rho_prev = f64::NAN;
    let mut rho_history = Vec::new();
    let (mut d_rho, mut d_psi) = (f64::INFINITY, f64::INFINITY);
    let max_steps = (cfg.t_max / dt).ceil() as usize;
    let mut step = 0;
    while step < max_steps {
        let k1 = hamiltonian_values(model, &psi_bar, 1.0)?;
        let next = rk4_step(model, &psi_bar, &k1, dt)?;
        let scale = next[i0];
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(ErgodicError::StepUnstable {
                dt,
                max_dt: 0.1 / (model.max_exit_rate() + model.cost_sup()),
            });
        }
        log_ref += scale.ln();
        let normalized: Vec<f64> = next.iter().map(|x| x / scale).collect();
        d_psi = w_norm(&normalized, &psi_bar, w);
        psi_bar = normalized;
        psi_bar[i0] = 1.0;
        step += 1;

        trail.push_back(log_ref);
        if trail.len() > window + 1 {
            trail.pop_front();
        }
        if trail.len() == window + 1 {
            let rho = ls_slope(trail.make_contiguous(), dt);
            if rho_prev.is_finite() {
                d_rho = (rho - rho_prev).abs();
            }
            rho_prev = rho;
            if step % window == 0 {
                rho_history.push(rho);
            }
            if d_rho < cfg.tol * rho.abs().max(1.0) && d_psi < cfg.tol && settled(model, &psi_bar, cfg)? {
                break;
            }
        }
    }
    if !(d_rho < cfg.tol * rho_prev.abs().max(1.0) && d_psi < cfg.tol) {
        return Err(ErgodicError::NoConvergence {
            t_max: cfg.t_max,
            d_rho,
            d_psi,
        });
    }

    let eval = hamiltonian_eval(model, &psi_bar, 1.0)?;
    let rho = eval.value[i0];
    let residual = psi_bar
        .iter()
        .zip(&eval.value)
        .map(|(p, h)| (rho * p - h).abs())
        .fold(0.0, f64::max);
    let t = step as f64 * dt;
    Ok(MarchOutcome {
        state: MarchState {
            t,
            psi_bar: psi_bar.clone(),
            log_psi_ref: log_ref,
            rho_estimate: rho_prev,
        },
        steps: step,
        dt,
        rho_history,
        solution: ErgodicSolution {
            rho,
            psi_hat: ValueFunction(psi_bar),
            v1_star: eval.v1,
            v2_star: eval.v2,
            truncation_level: n,
            diagnostics: ErgodicDiagnostics {
                residual,
                residual_limit: cfg.residual_tol * rho.abs().max(1.0),
                march_time: t,
                steps: step,
                dt,
                rho_march: rho_prev,
                rho_levels: Vec::new(),
                w_ratio: None,
                gates: GateReport {
                    lyapunov: None,
                    lyapunov_detail: String::new(),
                    small_cost: None,
                    small_cost_max_theta: None,
                    ref_state_condition: None,
                    overridden: false,
                },
            },
        },
    })
}

/// Evaluates both gates; `theta = 1` since the cost is taken as already scaled.
pub fn evaluate_gates(model: &GameModel, cert: Option<&LyapunovCertificate>) -> GateReport {
    let mut gates = GateReport {
        lyapunov: None,
        lyapunov_detail: "no certificate supplied".into(),
        small_cost: None,
        small_cost_max_theta: None,
        ref_state_condition: None,
        overridden: false,
    };
    if let Some(cert) = cert {
        match check_lyapunov(model, cert) {
            Ok(rep) => {
                gates.lyapunov = Some(true);
                gates.lyapunov_detail = "drift inequality holds at every state and action pair".into();
                gates.ref_state_condition = Some(rep.ref_state_condition);
            }
            Err(e) => {
                gates.lyapunov = Some(false);
                gates.lyapunov_detail = e.to_string();
            }
        }
        let sc = check_small_cost(model, cert, 1.0);
        gates.small_cost = Some(sc.passed);
        gates.small_cost_max_theta = Some(sc.max_theta);
    }
    gates
}

/// Solves along the truncation ladder `levels` (ascending, last level is
/// returned). An empty ladder means the single level `N`.
pub fn solve_ergodic(
    model: &GameModel,
    cert: Option<&LyapunovCertificate>,
    levels: &[usize],
    cfg: &ErgodicConfig,
) -> Result<ErgodicSolution, ErgodicError> {
    let mut gates = evaluate_gates(model, cert);
    let lyap_ok = gates.lyapunov == Some(true);
    let small_ok = gates.small_cost == Some(true);
    if !(lyap_ok && small_ok) {
        if !cfg.override_gates {
            return Err(if !lyap_ok {
                ErgodicError::GateFailed {
                    gate: "lyapunov".into(),
                    detail: gates.lyapunov_detail.clone(),
                }
            } else {
                ErgodicError::GateFailed {
                    gate: "small_cost".into(),
                    detail: format!(
                        "||r|| = {} must stay below delta / 2 = {}",
                        model.cost_sup(),
                        cert.map_or(f64::NAN, |c| c.delta / 2.0)
                    ),
                }
            });
        }
        gates.overridden = true;
    }

    let n = model.states();
    let ladder: Vec<usize> = if levels.is_empty() { vec![n] } else { levels.to_vec() };
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ErgodicError::BadParameter(
            "truncation levels must be strictly increasing".into(),
        ));
    }
    let w = cert.map(|c| c.w.as_slice());
    let mut rho_levels = Vec::new();
    let mut last = None;
    for &level in &ladder {
        let truncated = truncate_cost(model, level)?;
        let mut out = march_finite_horizon(&truncated, cfg, w)?.solution;
        out.truncation_level = level;
        if let Some(&(_, previous)) = rho_levels.last() {
            if out.rho < previous - cfg.monotone_slack {
                return Err(ErgodicError::NotMonotone {
                    level,
                    rho: out.rho,
                    previous,
                });
            }
        }
        rho_levels.push((level, out.rho));
        last = Some((truncated, out));
    }
    let (truncated, mut sol) = last.expect("ladder is nonempty");
    sol.diagnostics.rho_levels = rho_levels;
    sol.diagnostics.gates = gates;
    sol.diagnostics.w_ratio = cert.map(|c| sol.psi_hat.0.iter().zip(&c.w).map(|(p, w)| p / w).fold(0.0, f64::max));
    let (residual, _) = ergodic_residual(&truncated, sol.rho, &sol.psi_hat.0)?;
    sol.diagnostics.residual = residual;
    if residual > sol.diagnostics.residual_limit {
        return Err(ErgodicError::Residual {
            residual,
            limit: sol.diagnostics.residual_limit,
        });
    }
    Ok(sol)
}

/// `max_i |rho psi(i) - H(psi)(i)|` and the per-state Hamiltonian values.
pub fn ergodic_residual(model: &GameModel, rho: f64, psi: &[f64]) -> Result<(f64, Vec<f64>), GameError> {
    let h = hamiltonian_values(model, psi, 1.0)?;
    let r = psi.iter().zip(&h).map(|(p, x)| (rho * p - x).abs()).fold(0.0, f64::max);
    Ok((r, h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronResult {
    pub lambda: f64,
    /// Positive eigenvector with `eigvec[i0] = 1`.
    pub eigvec: Vec<f64>,
    /// Collatz-Wielandt bracket on `lambda`.
    pub lower: f64,
    pub upper: f64,
}

fn perron_of_generator(model: &GameModel, a: &DMatrix<f64>) -> Result<PerronResult, PerronResult> {
    let lam = model.uniformization_rate();
    let n = a.nrows();
    let p = DMatrix::identity(n, n) + a / lam;
    let wrap = |pair: crate::linalg::PerronPair| {
        let v: DVector<f64> = &pair.vector / pair.vector[model.ref_state];
        PerronResult {
            lambda: lam * pair.root,
            eigvec: v.iter().copied().collect(),
            lower: lam * pair.lo,
            upper: lam * pair.hi,
        }
    };
    // perron_root returns roots of P; the eigenvalue of A is lam (mu - 1)
    let shift = |r: PerronResult| PerronResult {
        lambda: r.lambda - lam,
        lower: r.lower - lam,
        upper: r.upper - lam,
        eigvec: r.eigvec,
    };
    perron_root(&p, 1e-15)
        .map(|x| shift(wrap(x)))
        .map_err(|x| shift(wrap(x)))
}

/// Principal eigenvalue of `Pi_v + diag(r_v)` for a stationary pair.
pub fn perron_value(model: &GameModel, v1: &[MixedAction], v2: &[MixedAction]) -> Result<PerronResult, ErgodicError> {
    let a = model.cost_generator(v1, v2);
    if !is_irreducible(&a) {
        return Err(ErgodicError::NotIrreducible);
    }
    perron_of_generator(model, &a).map_err(|r| ErgodicError::PowerIterationStalled {
        lo: r.lower,
        hi: r.upper,
    })
}

/// Bracket `[lower, upper]` on the principal eigenvalue with no irreducibility
/// requirement (used for deviations that may disconnect the chain).
fn eigen_bracket(model: &GameModel, v1: &[MixedAction], v2: &[MixedAction]) -> (f64, f64) {
    let a = model.cost_generator(v1, v2);
    match perron_of_generator(model, &a) {
        Ok(r) | Err(r) => (r.lower, r.upper),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    pub rho: f64,
    /// `max_v2 lambda(v1*, v2) - rho` over the tested deviations (should be <= tol).
    pub player2_margin: f64,
    /// `min_v1 lambda(v1, v2*) - rho` over the tested deviations (should be >= -tol).
    pub player1_margin: f64,
    pub player2_worst: Vec<MixedAction>,
    pub player1_worst: Vec<MixedAction>,
    pub pure_deviations: usize,
    pub mixed_deviations: usize,
    /// Whether every pure stationary deviation was enumerated; otherwise the
    /// pure set is the policy-iteration best response plus all single-state switches.
    pub exhaustive: bool,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleOptions {
    pub mixed_per_player: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_enumeration: usize,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self {
            mixed_per_player: 100,
            seed: 0,
            tol: 1e-6,
            max_enumeration: 10_000,
        }
    }
}

fn pure_policies(n: usize, m: usize, limit: usize) -> Option<Vec<Vec<MixedAction>>> {
    let total = (m as f64).powi(n as i32);
    if total > limit as f64 {
        return None;
    }
    let total = m.pow(n as u32);
    Some(
        (0..total)
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let a = code % m;
                        code /= m;
                        MixedAction::pure(m, a)
                    })
                    .collect()
            })
            .collect(),
    )
}

fn random_mixed(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<MixedAction> {
    (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            MixedAction::normalized(w)
        })
        .collect()
}

/// `count` stationary strategies with every row drawn uniformly from the
/// simplex, from `ChaCha8Rng::seed_from_u64(seed)` on stream `stream`.
pub fn random_stationary(seed: u64, stream: u64, count: usize, n: usize, m: usize) -> Vec<Vec<MixedAction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count).map(|_| random_mixed(&mut rng, n, m)).collect()
}

/// Pure best response of one player against the other's fixed stationary
/// strategy, by policy iteration on the Perron eigenvector.
fn best_response(model: &GameModel, fixed: &[MixedAction], maximize: bool) -> Vec<MixedAction> {
    let n = model.states();
    let m = if maximize { model.actions2() } else { model.actions1() };
    let pair = |dev: &[MixedAction]| -> (Vec<MixedAction>, Vec<MixedAction>) {
        if maximize {
            (fixed.to_vec(), dev.to_vec())
        } else {
            (dev.to_vec(), fixed.to_vec())
        }
    };
    let mut policy: Vec<usize> = vec![0; n];
    for _ in 0..100 {
        let dev: Vec<MixedAction> = policy.iter().map(|&a| MixedAction::pure(m, a)).collect();
        let (v1, v2) = pair(&dev);
        let a = model.cost_generator(&v1, &v2);
        let h = match perron_of_generator(model, &a) {
            Ok(r) | Err(r) => r.eigvec,
        };
        let mut changed = false;
        for i in 0..n {
            let score = |u: usize| {
                let own = MixedAction::pure(m, u);
                let (a1, a2) = if maximize { (&fixed[i], &own) } else { (&own, &fixed[i]) };
                let drift: f64 = (0..n).map(|j| bilinear_rate(model, i, j, a1, a2) * h[j]).sum();
                drift + bilinear_cost(model, i, a1, a2) * h[i]
            };
            let current = score(policy[i]);
            let (mut best, mut best_val) = (policy[i], current);
            for u in 0..m {
                let s = score(u);
                let better = if maximize { s > best_val } else { s < best_val };
                if better && (s - current).abs() > 1e-13 * (1.0 + current.abs()) {
                    best = u;
                    best_val = s;
                }
            }
            if best != policy[i] {
                policy[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    policy.into_iter().map(|a| MixedAction::pure(m, a)).collect()
}

fn deviation_set(
    model: &GameModel,
    fixed: &[MixedAction],
    own: &[MixedAction],
    maximize: bool,
    opts: &SaddleOptions,
) -> (Vec<Vec<MixedAction>>, usize, bool) {
    let n = model.states();
    let m = if maximize { model.actions2() } else { model.actions1() };
    let (mut set, exhaustive) = match pure_policies(n, m, opts.max_enumeration) {
        Some(all) => (all, true),
        None => {
            let mut s = vec![best_response(model, fixed, maximize)];
            for i in 0..n {
                for u in 0..m {
                    let mut d = own.to_vec();
                    d[i] = MixedAction::pure(m, u);
                    s.push(d);
                }
            }
            (s, false)
        }
    };
    let pure = set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(if maximize { 2 } else { 1 });
    for _ in 0..opts.mixed_per_player {
        set.push(random_mixed(&mut rng, n, m));
    }
    (set, pure, exhaustive)
}

/// Checks the saddle property of `(v1*, v2*)` against stationary deviations:
/// `lambda(v1*, v2) <= rho + tol` and `lambda(v1, v2*) >= rho - tol`.
/// Upper (resp. lower) Collatz-Wielandt bounds are used, so a pass is never
/// an artifact of an unconverged power iteration.
pub fn verify_saddle(
    model: &GameModel,
    solution: &ErgodicSolution,
    opts: &SaddleOptions,
) -> Result<SaddleReport, ErgodicError> {
    let report = saddle_margins(model, solution, opts);
    if report.player2_margin > opts.tol {
        return Err(ErgodicError::SaddleViolated {
            player: 2,
            strategy: report.player2_worst,
            margin: report.player2_margin,
        });
    }
    if report.player1_margin < -opts.tol {
        return Err(ErgodicError::SaddleViolated {
            player: 1,
            strategy: report.player1_worst,
            margin: report.player1_margin,
        });
    }
    Ok(report)
}

/// Deviation margins of [`verify_saddle`] without the pass/fail decision.
pub fn saddle_margins(model: &GameModel, solution: &ErgodicSolution, opts: &SaddleOptions) -> SaddleReport {
    let rho = solution.rho;
    let (v1s, v2s) = (&solution.v1_star, &solution.v2_star);
    let (dev2, pure2, ex2) = deviation_set(model, v1s, v2s, true, opts);
    let (dev1, pure1, ex1) = deviation_set(model, v2s, v1s, false, opts);

    let up: Vec<f64> = dev2.par_iter().map(|v2| eigen_bracket(model, v1s, v2).1).collect();
    let lo: Vec<f64> = dev1.par_iter().map(|v1| eigen_bracket(model, v1, v2s).0).collect();
    let (k2, max2) = up.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(k, m), (j, &x)| if x > m { (j, x) } else { (k, m) },
    );
    let (k1, min1) = lo.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(k, m), (j, &x)| if x < m { (j, x) } else { (k, m) },
    );
    SaddleReport {
        rho,
        player2_margin: max2 - rho,
        player1_margin: min1 - rho,
        player2_worst: dev2[k2].clone(),
        player1_worst: dev1[k1].clone(),
        pure_deviations: pure1 + pure2,
        mixed_deviations: 2 * opts.mixed_per_player,
        exhaustive: ex1 && ex2,
        tol: opts.tol,
    }
}

/// Finite-horizon march without normalization stopping, recorded at every
/// step: `psi(t, i) = exp(log_ref[k]) psi_bar[k][i]` at `t = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarchHistory {
    pub dt: f64,
    pub log_ref: Vec<f64>,
    pub psi_bar: Vec<Vec<f64>>,
    /// `H(psi_bar)` at each node (the normalized time derivative).
    pub slope: Vec<Vec<f64>>,
    pub v1: Vec<Vec<MixedAction>>,
    pub v2: Vec<Vec<MixedAction>>,
}

impl MarchHistory {
    pub fn horizon(&self) -> f64 {
        (self.log_ref.len() - 1) as f64 * self.dt
    }

    /// `psi(t, i)`, cubic Hermite between nodes.
    pub fn value(&self, t: f64, i: usize) -> f64 {
        let last = self.log_ref.len() - 1;
        let x = (t / self.dt).clamp(0.0, last as f64);
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return self.log_ref[0].exp() * self.psi_bar[0][i];
        }
        let s = x - k as f64;
        let (ea, eb) = (self.log_ref[k].exp(), self.log_ref[k + 1].exp());
        let (pa, pb) = (ea * self.psi_bar[k][i], eb * self.psi_bar[k + 1][i]);
        let (da, db) = (ea * self.slope[k][i], eb * self.slope[k + 1][i]);
        let h = self.dt;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * pa
            + (s3 - 2.0 * s2 + s) * h * da
            + (-2.0 * s3 + 3.0 * s2) * pb
            + (s3 - s2) * h * db
    }

    /// Saddle profile for the horizon `k dt`: at elapsed time `s` the
    /// remaining horizon is `k dt - s`, so slot `j` uses the selectors of
    /// march node `k - j - 1`.
    pub fn profile(&self, steps: usize) -> StrategyProfile {
        let steps = steps.min(self.log_ref.len() - 1).max(1);
        let pick = |table: &[Vec<MixedAction>]| -> Vec<Vec<MixedAction>> {
            (0..steps).map(|j| table[steps - j - 1].clone()).collect()
        };
        StrategyProfile {
            player1: Strategy::Markov {
                dt: self.dt,
                table: pick(&self.v1),
            },
            player2: Strategy::Markov {
                dt: self.dt,
                table: pick(&self.v2),
            },
        }
    }
}

/// Records the normalized march of `psi' = H(psi)`, `psi(0) = 1`, up to `horizon`.
pub fn march_history(model: &GameModel, horizon: f64, dt: f64) -> Result<MarchHistory, ErgodicError> {
    check_step(model, dt)?;
    let steps = (horizon / dt).round().max(1.0) as usize;
    let i0 = model.ref_state;
    let n = model.states();
    let mut hist = MarchHistory {
        dt,
        log_ref: vec![0.0],
        psi_bar: vec![vec![1.0; n]],
        slope: Vec::new(),
        v1: Vec::new(),
        v2: Vec::new(),
    };
    for k in 0..=steps {
        let eval = hamiltonian_eval(model, &hist.psi_bar[k], 1.0)?;
        hist.v1.push(eval.v1);
        hist.v2.push(eval.v2);
        if k == steps {
            hist.slope.push(eval.value);
            break;
        }
        let next = rk4_step(model, &hist.psi_bar[k], &eval.value, dt)?;
        hist.slope.push(eval.value);
        let scale = next[i0];
        hist.log_ref.push(hist.log_ref[k] + scale.ln());
        hist.psi_bar.push(next.iter().map(|x| x / scale).collect());
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::tests::random_model;
    use crate::model::validate;

    fn one_state() -> GameModel {
        GameModel::new(1, 2, 2, vec![0.0; 4], vec![0.0, 2.0, 3.0, 1.0], 1.0, 1.0, 0).unwrap()
    }

    /// Two-state birth-death chain with a certificate `W = (1, 2)`, `delta = 1`, `b = 3`.
    pub(crate) fn birth_death(costs: [f64; 8]) -> (GameModel, LyapunovCertificate) {
        let mut rate = vec![0.0; 16];
        for u in 0..4 {
            rate[u] = -1.0 - 0.5 * (u % 2) as f64;
            rate[4 + u] = 1.0 + 0.5 * (u % 2) as f64;
            rate[8 + u] = 4.0 + (u / 2) as f64;
            rate[12 + u] = -4.0 - (u / 2) as f64;
        }
        let mut m = GameModel::new(2, 2, 2, rate, costs.to_vec(), 1.0, 1.0, 0).unwrap();
        validate(&mut m).unwrap();
        let cert = LyapunovCertificate {
            w: vec![1.0, 2.0],
            delta: 1.0,
            b: 4.0,
            c: vec![0],
        };
        (m, cert)
    }

    fn gateless() -> ErgodicConfig {
        ErgodicConfig {
            override_gates: true,
            ..Default::default()
        }
    }

    #[test]
    fn zero_cost_march() {
        let m = random_model(1, 3, 2, 2).with_cost_scale(0.0);
        let out = march_finite_horizon(&m, &ErgodicConfig::default(), None).unwrap();
        assert!(out.solution.rho.abs() < 1e-14);
        assert!(out.solution.psi_hat.0.iter().all(|&p| (p - 1.0).abs() < 1e-14));
    }

    #[test]
    fn constant_cost_march() {
        let mut m = random_model(2, 3, 2, 2);
        for i in 0..3 {
            for u1 in 0..2 {
                for u2 in 0..2 {
                    m.set_cost(i, u1, u2, 0.4);
                }
            }
        }
        let out = march_finite_horizon(&m, &ErgodicConfig::default(), None).unwrap();
        assert!((out.solution.rho - 0.4).abs() < 1e-12);
        assert!(out.solution.psi_hat.0.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn one_state_value_of_game() {
        let m = one_state();
        let sol = solve_ergodic(&m, None, &[1], &gateless()).unwrap();
        assert!((sol.rho - 1.5).abs() < 1e-12);
        assert_eq!(sol.psi_hat.0, vec![1.0]);
        assert!(sol.diagnostics.gates.overridden);
    }

    #[test]
    fn gates_block_without_override() {
        let m = one_state();
        assert!(matches!(
            solve_ergodic(&m, None, &[], &ErgodicConfig::default()),
            Err(ErgodicError::GateFailed { .. })
        ));
        let (m, cert) = birth_death([0.9; 8]);
        match solve_ergodic(&m, Some(&cert), &[], &ErgodicConfig::default()) {
            Err(ErgodicError::GateFailed { gate, .. }) => assert_eq!(gate, "small_cost"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn birth_death_gated_solution() {
        let (m, cert) = birth_death([0.1, 0.4, 0.3, 0.2, 0.0, 0.35, 0.25, 0.05]);
        let sol = solve_ergodic(&m, Some(&cert), &[1, 2], &ErgodicConfig::default()).unwrap();
        assert!(sol.diagnostics.residual <= 1e-6);
        let p = perron_value(&m, &sol.v1_star, &sol.v2_star).unwrap();
        assert!((p.lambda - sol.rho).abs() < 1e-9);
        for (a, b) in p.eigvec.iter().zip(&sol.psi_hat.0) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(sol.diagnostics.rho_levels[0].1 <= sol.diagnostics.rho_levels[1].1 + 1e-8);
        assert!(sol.diagnostics.w_ratio.unwrap() <= 1.0);
        verify_saddle(&m, &sol, &SaddleOptions::default()).unwrap();
    }

    #[test]
    fn truncation_monotone() {
        let m = random_model(4, 3, 2, 2);
        let sol = solve_ergodic(&m, None, &[1, 2, 3], &gateless()).unwrap();
        let r = &sol.diagnostics.rho_levels;
        assert!(r[0].1 <= r[1].1 + 1e-8 && r[1].1 <= r[2].1 + 1e-8);
    }

    #[test]
    fn cost_shift_covariance() {
        let m = random_model(5, 3, 2, 2);
        let shifted = m.with_cost_shift(0.3);
        let cfg = ErgodicConfig {
            dt: Some(gateless().step_for(&shifted)),
            ..gateless()
        };
        let a = solve_ergodic(&m, None, &[], &cfg).unwrap();
        let b = solve_ergodic(&shifted, None, &[], &cfg).unwrap();
        assert!((b.rho - a.rho - 0.3).abs() < 1e-8);
        for (x, y) in a.psi_hat.0.iter().zip(&b.psi_hat.0) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn perron_examples() {
        let m = random_model(6, 3, 2, 2);
        let v1 = vec![MixedAction::uniform(2); 3];
        let v2 = vec![MixedAction::pure(2, 1); 3];
        let p = perron_value(&m.with_cost_scale(0.0), &v1, &v2).unwrap();
        assert!(p.lambda.abs() < 1e-12);
        assert!(p.eigvec.iter().all(|&x| (x - 1.0).abs() < 1e-10));
        let mut c = m.with_cost_scale(0.0);
        for i in 0..3 {
            for u in 0..4 {
                c.set_cost(i, u / 2, u % 2, 0.7);
            }
        }
        assert!((perron_value(&c, &v1, &v2).unwrap().lambda - 0.7).abs() < 1e-12);
        let one = one_state();
        let p = perron_value(&one, &[MixedAction::pure(2, 1)], &[MixedAction::pure(2, 0)]).unwrap();
        assert!((p.lambda - 3.0).abs() < 1e-12);
    }

    #[test]
    fn perron_rejects_reducible() {
        let rate = vec![-1.0, 1.0, 0.0, 0.0];
        let m = GameModel::new(2, 1, 1, rate, vec![0.1, 0.2], 1.0, 1.0, 0).unwrap();
        let v = vec![MixedAction::pure(1, 0); 2];
        assert_eq!(perron_value(&m, &v, &v), Err(ErgodicError::NotIrreducible));
    }

    #[test]
    fn one_state_saddle() {
        let m = one_state();
        let sol = solve_ergodic(&m, None, &[], &gateless()).unwrap();
        let rep = verify_saddle(&m, &sol, &SaddleOptions::default()).unwrap();
        assert!(rep.exhaustive);
        assert!(rep.player2_margin.abs() < 1e-9);
        assert!(rep.player1_margin.abs() < 1e-9);
        let mut bad = sol.clone();
        bad.rho -= 0.1;
        assert!(matches!(
            verify_saddle(&m, &bad, &SaddleOptions::default()),
            Err(ErgodicError::SaddleViolated { player: 2, .. })
        ));
    }

    #[test]
    fn random_models_saddle_and_oracle() {
        for seed in 10..14 {
            let m = random_model(seed, 4, 2, 3);
            let sol = solve_ergodic(&m, None, &[], &gateless()).unwrap();
            let p = perron_value(&m, &sol.v1_star, &sol.v2_star).unwrap();
            assert!((p.lambda - sol.rho).abs() < 1e-8);
            verify_saddle(&m, &sol, &SaddleOptions::default()).unwrap();
        }
    }

    #[test]
    fn best_response_matches_enumeration() {
        let m = random_model(20, 5, 2, 2);
        let sol = solve_ergodic(&m, None, &[], &gateless()).unwrap();
        let br = best_response(&m, &sol.v1_star, true);
        let br_val = eigen_bracket(&m, &sol.v1_star, &br).1;
        let all = pure_policies(5, 2, 100).unwrap();
        let best = all
            .iter()
            .map(|v2| eigen_bracket(&m, &sol.v1_star, v2).1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((br_val - best).abs() < 1e-9);
    }

    #[test]
    fn unstable_step_rejected() {
        let m = random_model(7, 3, 2, 2);
        let cfg = ErgodicConfig {
            dt: Some(1.0),
            ..gateless()
        };
        assert!(matches!(
            march_finite_horizon(&m, &cfg, None),
            Err(ErgodicError::StepUnstable { .. })
        ));
    }

    #[test]
    fn history_matches_semigroup_for_fixed_selectors() {
        let m = one_state();
        let h = march_history(&m, 2.0, 0.01).unwrap();
        assert!((h.value(2.0, 0) / 3.0_f64.exp() - 1.0).abs() < 1e-8);
        assert!((h.value(1.005, 0) / (1.5 * 1.005_f64).exp() - 1.0).abs() < 1e-8);
        let prof = h.profile(200);
        assert_eq!(prof.player1.at(0.0, 0), &h.v1[199][0]);
    }
}
