//! Discounted risk-sensitive game as an ODE in the risk parameter:
//!
//! ```text
//! alpha theta dpsi/dtheta (theta, i) = min_v1 max_v2 [ Pi_v psi(theta, .)(i) + theta r(i, v) psi(theta, i) ]
//! ```
//!
//! The equation is singular at `theta = 0`, so it is started at `theta = eps`
//! from `exp(eps ||r|| / alpha)` and marched over intervals `[a, a + delta]`
//! on which the integral operator
//!
//! ```text
//! (T f)(eta, i) = f(a, i) + (1/alpha) int_a^eta minmax[ Pi_v f(theta, .)(i) / theta + r(i, v) f(theta, i) ] dtheta
//! ```
//!
//! is a contraction with constant `(1/alpha) [ ||r|| delta + 2 M ln(1 + delta / a) ]`.
//! Each interval is solved by Picard iteration with composite Simpson
//! quadrature, starting from an adaptive RK4 integration of the ODE form.

use crate::hamiltonian::{hamiltonian_eval, hamiltonian_values};
use crate::matrix_game::GameError;
use crate::model::{GameModel, MixedAction, Strategy, StrategyProfile};
use crate::quadrature::{cumulative_simpson, simpson_error_estimate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscountedError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("Picard iteration on [{start}, {end}] did not converge in {sweeps} sweeps (last change {last_change})")]
    NoConvergence {
        start: f64,
        end: f64,
        sweeps: usize,
        last_change: f64,
    },
    #[error("grid too coarse on [{start}, {end}]: Simpson error estimate {estimate}")]
    GridTooCoarse { start: f64, end: f64, estimate: f64 },
    #[error("observed Picard contraction {observed} exceeds the bound {bound} on [{start}, {end}]")]
    ContractionViolated {
        start: f64,
        end: f64,
        observed: f64,
        bound: f64,
    },
    #[error("HJI residual {residual} exceeds {limit}")]
    Residual { residual: f64, limit: f64 },
    #[error("policy horizon runs past T_eps = {t_eps}")]
    HorizonBeyondEpsilon { t_eps: f64 },
    #[error("epsilon refinement stalled after {halvings} halvings (last difference {last_difference})")]
    RefineStalled { halvings: usize, last_difference: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedConfig {
    /// Starting point of the march; `None` means `1e-3 * theta_cap`.
    pub epsilon: Option<f64>,
    /// Target contraction constant per interval.
    pub safety: f64,
    /// Sup-norm Picard tolerance, relative to `max(1, ||f||)`.
    pub picard_tol: f64,
    pub max_sweeps: usize,
    /// Initial panel count per interval (nodes = panels + 1, panels divisible by 4).
    pub min_panels: usize,
    pub max_panels: usize,
    /// Intervals never grow beyond `max_growth * start`.
    pub max_growth: f64,
    /// Relative Simpson error estimate allowed per interval.
    pub quad_tol: f64,
    /// Relative tolerance of the adaptive RK4 cross-check.
    pub rk4_tol: f64,
    /// Central-difference HJI residual allowed, relative to `||psi||`.
    pub residual_tol: f64,
}

impl Default for DiscountedConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            safety: 0.5,
            picard_tol: 1e-10,
            max_sweeps: 200,
            min_panels: 32,
            max_panels: 4096,
            max_growth: 1.0,
            quad_tol: 1e-10,
            rk4_tol: 1e-11,
            residual_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionStep {
    pub delta: f64,
    pub kappa: f64,
}

/// `(1/alpha) [ ||r|| delta + 2 M ln(1 + delta / start) ]`.
pub fn contraction_constant(model: &GameModel, start: f64, alpha: f64, delta: f64) -> f64 {
    (model.cost_sup() * delta + 2.0 * model.max_exit_rate() * (delta / start).ln_1p()) / alpha
}

/// Largest `delta` whose contraction constant on `[start, start + delta]` is at
/// most `safety`, found by bisection. Infinite when the constant vanishes
/// identically (`M = 0` and `r = 0`).
pub fn contraction_step(model: &GameModel, start: f64, alpha: f64, safety: f64) -> ContractionStep {
    let kappa = |d: f64| contraction_constant(model, start, alpha, d);
    let mut hi = start.max(1e-300);
    while kappa(hi) <= safety {
        hi *= 2.0;
        if hi > 1e300 {
            return ContractionStep {
                delta: f64::INFINITY,
                kappa: 0.0,
            };
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kappa(mid) <= safety {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ContractionStep {
        delta: lo,
        kappa: kappa(lo),
    }
}

/// Right-hand side of the ODE form, `dpsi/dtheta = H_theta(psi) / (alpha theta)`.
fn rhs(model: &GameModel, alpha: f64, theta: f64, psi: &[f64]) -> Result<Vec<f64>, GameError> {
    let h = hamiltonian_values(model, psi, theta)?;
    Ok(h.into_iter().map(|x| x / (alpha * theta)).collect())
}

/// One application of the integral operator on a uniform node grid.
/// `f[k]` holds the per-state values at `nodes[k]`; `initial` is the value at
/// `nodes[0]`. Returns `T f` and the largest Simpson error estimate over states.
pub fn picard_apply(
    model: &GameModel,
    nodes: &[f64],
    f: &[Vec<f64>],
    initial: &[f64],
    alpha: f64,
) -> Result<(Vec<Vec<f64>>, f64), GameError> {
    let h = nodes[1] - nodes[0];
    let integrand: Vec<Vec<f64>> = nodes
        .iter()
        .zip(f)
        .map(|(&theta, fk)| rhs(model, alpha, theta, fk))
        .collect::<Result<_, _>>()?;
    let n = model.states();
    let mut out = vec![initial.to_vec(); nodes.len()];
    let mut quad_err = 0.0_f64;
    let mut column = vec![0.0; nodes.len()];
    for i in 0..n {
        for (c, g) in column.iter_mut().zip(&integrand) {
            *c = g[i];
        }
        let cum = cumulative_simpson(&column, h);
        if (nodes.len() - 1).is_multiple_of(4) {
            quad_err = quad_err.max(simpson_error_estimate(&column, h));
        }
        for (o, c) in out.iter_mut().zip(&cum) {
            o[i] += c;
        }
    }
    Ok((out, quad_err))
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn sup_norm(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn rk4_step(model: &GameModel, alpha: f64, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, GameError> {
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = rhs(model, alpha, t, y)?;
    let k2 = rhs(model, alpha, t + 0.5 * h, &axpy(y, &k1, 0.5 * h))?;
    let k3 = rhs(model, alpha, t + 0.5 * h, &axpy(y, &k2, 0.5 * h))?;
    let k4 = rhs(model, alpha, t + h, &axpy(y, &k3, h))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// RK4 from `t0` to `t1` with step-doubling error control.
fn rk4_adaptive(
    model: &GameModel,
    alpha: f64,
    t0: f64,
    t1: f64,
    y0: &[f64],
    tol: f64,
    depth: u32,
) -> Result<Vec<f64>, GameError> {
    let h = t1 - t0;
    let full = rk4_step(model, alpha, t0, y0, h)?;
    let mid = rk4_step(model, alpha, t0, y0, 0.5 * h)?;
    let two = rk4_step(model, alpha, t0 + 0.5 * h, &mid, 0.5 * h)?;
    let scale = two.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let err = two.iter().zip(&full).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / 15.0;
    if err <= tol * scale || depth >= 16 {
        return Ok(two.iter().zip(&full).map(|(a, b)| a + (a - b) / 15.0).collect());
    }
    let tm = t0 + 0.5 * h;
    let ym = rk4_adaptive(model, alpha, t0, tm, y0, tol, depth + 1)?;
    rk4_adaptive(model, alpha, tm, t1, &ym, tol, depth + 1)
}

/// Max over interior nodes of `|alpha theta D psi - H_theta(psi)|`, with `D` the
/// three-point (possibly non-uniform) central difference.
fn central_residual(theta: &[f64], psi: &[Vec<f64>], ham: &[Vec<f64>], alpha: f64) -> f64 {
    let mut worst = 0.0_f64;
    for k in 1..theta.len().saturating_sub(1) {
        let (h1, h2) = (theta[k] - theta[k - 1], theta[k + 1] - theta[k]);
        for i in 0..psi[k].len() {
            let d = (h1 * h1 * psi[k + 1][i] - h2 * h2 * psi[k - 1][i] + (h2 * h2 - h1 * h1) * psi[k][i])
                / (h1 * h2 * (h1 + h2));
            worst = worst.max((alpha * theta[k] * d - ham[k][i]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscountedDiagnostics {
    pub intervals: usize,
    pub nodes: usize,
    pub max_sweeps: usize,
    /// Largest contraction bound used on any interval.
    pub max_kappa: f64,
    /// Largest ratio of successive Picard updates that was measurable.
    pub max_observed_contraction: f64,
    /// Largest sup gap between the Picard fixed point and the RK4 integration, relative.
    pub max_rk4_gap: f64,
    pub max_quad_error: f64,
    /// Central-difference HJI residual over interior nodes (absolute).
    pub residual: f64,
    pub psi_sup: f64,
    /// Successive sup differences recorded by [`refine_epsilon`].
    pub refine_history: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedSolution {
    pub theta_grid: Vec<f64>,
    /// `psi[k][i]` at `theta_grid[k]`.
    pub psi: Vec<Vec<f64>>,
    /// `dpsi/dtheta` at the nodes, from the equation itself.
    pub dpsi: Vec<Vec<f64>>,
    pub v1: Vec<Vec<MixedAction>>,
    pub v2: Vec<Vec<MixedAction>>,
    pub epsilon: f64,
    pub alpha: f64,
    pub diagnostics: DiscountedDiagnostics,
}

impl DiscountedSolution {
    /// Index of the grid node nearest to `theta`.
    pub fn nearest_node(&self, theta: f64) -> usize {
        let g = &self.theta_grid;
        match g.binary_search_by(|x| x.partial_cmp(&theta).unwrap()) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) if k >= g.len() => g.len() - 1,
            Err(k) => {
                if theta - g[k - 1] <= g[k] - theta {
                    k - 1
                } else {
                    k
                }
            }
        }
    }

    /// Cubic Hermite interpolation of `psi(theta, i)` using the stored slopes.
    pub fn value_at(&self, theta: f64, i: usize) -> f64 {
        let g = &self.theta_grid;
        if theta <= g[0] {
            return self.psi[0][i];
        }
        if theta >= g[g.len() - 1] {
            return self.psi[g.len() - 1][i];
        }
        let k = g.partition_point(|&x| x <= theta) - 1;
        let (a, b) = (g[k], g[k + 1]);
        let h = b - a;
        let s = (theta - a) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.psi[k][i]
            + (s3 - 2.0 * s2 + s) * h * self.dpsi[k][i]
            + (-2.0 * s3 + 3.0 * s2) * self.psi[k + 1][i]
            + (s3 - s2) * h * self.dpsi[k + 1][i]
    }

    pub fn final_slice(&self) -> &[f64] {
        self.psi.last().unwrap()
    }

    pub fn theta_max(&self) -> f64 {
        *self.theta_grid.last().unwrap()
    }
}

struct IntervalSolution {
    nodes: Vec<f64>,
    psi: Vec<Vec<f64>>,
    ham: Vec<Vec<f64>>,
    v1: Vec<Vec<MixedAction>>,
    v2: Vec<Vec<MixedAction>>,
    sweeps: usize,
    observed: f64,
    rk4_gap: f64,
    quad_err: f64,
}

fn solve_interval(
    model: &GameModel,
    cfg: &DiscountedConfig,
    start: f64,
    delta: f64,
    initial: &[f64],
    kappa: f64,
) -> Result<IntervalSolution, DiscountedError> {
    let alpha = model.alpha;
    let mut panels = cfg.min_panels.max(4).next_multiple_of(4);
    loop {
        let h = delta / panels as f64;
        let nodes: Vec<f64> = (0..=panels)
            .map(|k| {
                if k == panels {
                    start + delta
                } else {
                    start + k as f64 * h
                }
            })
            .collect();

        // adaptive RK4 through the nodes: the initial Picard iterate and the cross-check
        let mut guess = Vec::with_capacity(nodes.len());
        guess.push(initial.to_vec());
        for k in 0..panels {
            let next = rk4_adaptive(model, alpha, nodes[k], nodes[k + 1], &guess[k], cfg.rk4_tol, 0)?;
            guess.push(next);
        }

        let mut f = guess.clone();
        let mut prev_change = f64::NAN;
        let mut observed = 0.0_f64;
        let mut sweeps = 0;
        let mut quad_err;
        loop {
            let (tf, qe) = picard_apply(model, &nodes, &f, initial, alpha)?;
            quad_err = qe;
            sweeps += 1;
            let change = sup_diff(&tf, &f);
            let scale = sup_norm(&tf).max(1.0);
            if prev_change.is_finite() && prev_change > 1e-9 * scale {
                let ratio = change / prev_change;
                observed = observed.max(ratio);
                if ratio > kappa * 1.05 + 1e-12 {
                    return Err(DiscountedError::ContractionViolated {
                        start,
                        end: start + delta,
                        observed: ratio,
                        bound: kappa,
                    });
                }
            }
            prev_change = change;
            f = tf;
            if change <= cfg.picard_tol * scale {
                break;
            }
            if sweeps >= cfg.max_sweeps {
                return Err(DiscountedError::NoConvergence {
                    start,
                    end: start + delta,
                    sweeps,
                    last_change: change,
                });
            }
        }

        let scale = sup_norm(&f).max(1.0);
        let rk4_gap = sup_diff(&f, &guess) / scale;
        let mut ham = Vec::with_capacity(nodes.len());
        let mut v1 = Vec::with_capacity(nodes.len());
        let mut v2 = Vec::with_capacity(nodes.len());
        for (&theta, fk) in nodes.iter().zip(&f) {
            let res = hamiltonian_eval(model, fk, theta)?;
            ham.push(res.value);
            v1.push(res.v1);
            v2.push(res.v2);
        }
        let residual = central_residual(&nodes, &f, &ham, alpha);
        let integral_scale = sup_norm(&f).max(1.0);
        let quad_ok = quad_err <= cfg.quad_tol * integral_scale;
        let residual_ok = residual <= 0.5 * cfg.residual_tol * scale;
        if quad_ok && residual_ok {
            return Ok(IntervalSolution {
                nodes,
                psi: f,
                ham,
                v1,
                v2,
                sweeps,
                observed,
                rk4_gap,
                quad_err,
            });
        }
        if panels * 2 > cfg.max_panels {
            if !quad_ok {
                return Err(DiscountedError::GridTooCoarse {
                    start,
                    end: start + delta,
                    estimate: quad_err,
                });
            }
            // the global residual check reports the failure
            return Ok(IntervalSolution {
                nodes,
                psi: f,
                ham,
                v1,
                v2,
                sweeps,
                observed,
                rk4_gap,
                quad_err,
            });
        }
        panels *= 2;
    }
}

/// Marches the `eps`-started equation from `eps` up to `theta_query`.
pub fn solve_discounted(
    model: &GameModel,
    cfg: &DiscountedConfig,
    theta_query: f64,
) -> Result<DiscountedSolution, DiscountedError> {
    let alpha = model.alpha;
    let eps = cfg.epsilon.unwrap_or(1e-3 * model.theta_cap);
    if !(eps > 0.0 && eps < theta_query && theta_query < model.theta_cap) {
        return Err(DiscountedError::BadParameter(format!(
            "need 0 < eps < theta < theta_cap, got eps={eps}, theta={theta_query}, theta_cap={}",
            model.theta_cap
        )));
    }
    if !(cfg.safety > 0.0 && cfg.safety < 1.0) {
        return Err(DiscountedError::BadParameter("safety must lie in (0, 1)".into()));
    }
    let mut diag = DiscountedDiagnostics::default();
    let exponent = model.theta_cap * model.cost_sup() / alpha;
    if exponent > 600.0 {
        diag.warnings.push(format!(
            "theta_cap ||r|| / alpha = {exponent:.1} > 600: psi may overflow"
        ));
    }

    let n = model.states();
    let h_eps = (eps * model.cost_sup() / alpha).exp();
    let mut sol = DiscountedSolution {
        theta_grid: vec![eps],
        psi: vec![vec![h_eps; n]],
        dpsi: Vec::new(),
        v1: Vec::new(),
        v2: Vec::new(),
        epsilon: eps,
        alpha,
        diagnostics: DiscountedDiagnostics::default(),
    };
    let mut ham_all: Vec<Vec<f64>> = Vec::new();
    let mut start = eps;
    while start < theta_query {
        let step = contraction_step(model, start, alpha, cfg.safety);
        let mut delta = step.delta.min(cfg.max_growth * start).min(theta_query - start);
        if theta_query - (start + delta) < 1e-9 * theta_query {
            delta = theta_query - start;
        }
        let kappa = contraction_constant(model, start, alpha, delta);
        let initial = sol.psi.last().unwrap().clone();
        let iv = solve_interval(model, cfg, start, delta, &initial, kappa)?;
        diag.intervals += 1;
        diag.max_sweeps = diag.max_sweeps.max(iv.sweeps);
        diag.max_kappa = diag.max_kappa.max(kappa);
        diag.max_observed_contraction = diag.max_observed_contraction.max(iv.observed);
        diag.max_rk4_gap = diag.max_rk4_gap.max(iv.rk4_gap);
        diag.max_quad_error = diag.max_quad_error.max(iv.quad_err);

        // first node duplicates the previous terminal node
        if ham_all.is_empty() {
            ham_all.push(iv.ham[0].clone());
            sol.v1.push(iv.v1[0].clone());
            sol.v2.push(iv.v2[0].clone());
        }
        let skip = 1;
        sol.theta_grid.extend_from_slice(&iv.nodes[skip..]);
        sol.psi.extend(iv.psi.into_iter().skip(skip));
        ham_all.extend(iv.ham.into_iter().skip(skip));
        sol.v1.extend(iv.v1.into_iter().skip(skip));
        sol.v2.extend(iv.v2.into_iter().skip(skip));
        start += delta;
    }
    sol.dpsi = sol
        .theta_grid
        .iter()
        .zip(&ham_all)
        .map(|(&t, h)| h.iter().map(|x| x / (alpha * t)).collect())
        .collect();
    diag.nodes = sol.theta_grid.len();
    diag.psi_sup = sup_norm(&sol.psi);
    diag.residual = central_residual(&sol.theta_grid, &sol.psi, &ham_all, alpha);
    sol.diagnostics = diag;
    let limit = cfg.residual_tol * sol.diagnostics.psi_sup;
    if sol.diagnostics.residual > limit {
        return Err(DiscountedError::Residual {
            residual: sol.diagnostics.residual,
            limit,
        });
    }
    Ok(sol)
}

/// Halves `eps` until successive solutions differ by less than `tol` in sup
/// norm on the grid of the first solve. The recorded differences are kept in
/// `diagnostics.refine_history`.
pub fn refine_epsilon(
    model: &GameModel,
    cfg: &DiscountedConfig,
    theta_query: f64,
    tol: f64,
    max_halvings: usize,
) -> Result<DiscountedSolution, DiscountedError> {
    let mut cfg = cfg.clone();
    let eps0 = cfg.epsilon.unwrap_or(1e-3 * model.theta_cap);
    cfg.epsilon = Some(eps0);
    let first = solve_discounted(model, &cfg, theta_query)?;
    let common: Vec<f64> = first.theta_grid.clone();
    let mut prev = first;
    let mut history = Vec::new();
    for halving in 1..=max_halvings {
        cfg.epsilon = Some(eps0 / f64::powi(2.0, halving as i32));
        let next = solve_discounted(model, &cfg, theta_query)?;
        let mut diff = 0.0_f64;
        for &t in &common {
            for i in 0..model.states() {
                diff = diff.max((next.value_at(t, i) - prev.value_at(t, i)).abs());
            }
        }
        history.push(diff);
        prev = next;
        if diff < tol {
            prev.diagnostics.refine_history = history;
            return Ok(prev);
        }
    }
    Err(DiscountedError::RefineStalled {
        halvings: max_halvings,
        last_difference: *history.last().unwrap_or(&f64::NAN),
    })
}

/// Markov saddle strategies `v(t, i) = vbar(theta e^{-alpha t}, i)` sampled on a
/// `dt` grid, stopped at `T_eps` when `theta e^{-alpha t}` would fall below `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub theta: f64,
    pub dt: f64,
    /// `T_eps = ln(theta / eps) / alpha`.
    pub t_eps: f64,
    pub truncated: bool,
    pub v1: Vec<Vec<MixedAction>>,
    pub v2: Vec<Vec<MixedAction>>,
}

impl MarkovPolicy {
    pub fn profile(&self) -> StrategyProfile {
        StrategyProfile {
            player1: Strategy::Markov {
                dt: self.dt,
                table: self.v1.clone(),
            },
            player2: Strategy::Markov {
                dt: self.dt,
                table: self.v2.clone(),
            },
        }
    }

    /// Player 1 keeps the saddle table, player 2 switches to `v2`.
    pub fn with_player2(&self, v2: Vec<MixedAction>) -> StrategyProfile {
        StrategyProfile {
            player1: Strategy::Markov {
                dt: self.dt,
                table: self.v1.clone(),
            },
            player2: Strategy::stationary(v2),
        }
    }

    /// Player 2 keeps the saddle table, player 1 switches to `v1`.
    pub fn with_player1(&self, v1: Vec<MixedAction>) -> StrategyProfile {
        StrategyProfile {
            player1: Strategy::stationary(v1),
            player2: Strategy::Markov {
                dt: self.dt,
                table: self.v2.clone(),
            },
        }
    }
}

pub fn extract_markov_policy(
    solution: &DiscountedSolution,
    theta: f64,
    horizon: f64,
    dt: f64,
    allow_truncation: bool,
) -> Result<MarkovPolicy, DiscountedError> {
    let eps = solution.epsilon;
    if !(theta >= eps && theta <= solution.theta_max() * (1.0 + 1e-12)) {
        return Err(DiscountedError::BadParameter(format!(
            "theta {theta} outside the solved range [{eps}, {}]",
            solution.theta_max()
        )));
    }
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(DiscountedError::BadParameter("need dt > 0 and horizon >= 0".into()));
    }
    let alpha = solution.alpha;
    let t_eps = (theta / eps).ln() / alpha;
    let steps = ((horizon / dt).ceil() as usize).max(1);
    let mut policy = MarkovPolicy {
        theta,
        dt,
        t_eps,
        truncated: false,
        v1: Vec::with_capacity(steps),
        v2: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        let th = theta * (-alpha * t).exp();
        if th < eps * (1.0 - 1e-12) {
            if !allow_truncation {
                return Err(DiscountedError::HorizonBeyondEpsilon { t_eps });
            }
            policy.truncated = true;
            break;
        }
        let node = solution.nearest_node(th);
        policy.v1.push(solution.v1[node].clone());
        policy.v2.push(solution.v2[node].clone());
    }
    Ok(policy)
}
