//! Game data: controlled rate tensor, running costs, mixed actions and the
//! Lyapunov / small-cost certificates that gate the ergodic solver.
//!
//! States and actions are 0-based throughout. Tensors are stored flat in
//! row-major order, `rate[i][j][u1][u2]` and `cost[i][u1][u2]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums within this distance of zero are repaired by adjusting the diagonal.
pub const ROW_REPAIR_TOL: f64 = 1e-9;

/// Probability vectors must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("negative off-diagonal rate at i={i}, j={j}, u=({u1},{u2}): {value}")]
    NegativeOffDiagonal {
        i: usize,
        j: usize,
        u1: usize,
        u2: usize,
        value: f64,
    },
    #[error("row i={i}, u=({u1},{u2}) is not conservative (row sum {sum})")]
    NonConservativeRow { i: usize, u1: usize, u2: usize, sum: f64 },
    #[error("negative cost at i={i}, u=({u1},{u2}): {value}")]
    NegativeCost { i: usize, u1: usize, u2: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("truncation level {n} outside 1..={states}")]
    BadTruncationLevel { n: usize, states: usize },
    #[error("invalid mixed action: {0}")]
    BadMixedAction(String),
    #[error("Lyapunov certificate violated at state {i}, u=({u1},{u2}), slack {slack}")]
    CertificateViolated { i: usize, u1: usize, u2: usize, slack: f64 },
}

/// A probability vector over one player's finite action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixedAction(Vec<f64>);

impl MixedAction {
    pub fn new(weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::BadMixedAction("empty support".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ModelError::BadMixedAction(format!(
                "negative or non-finite weight in {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(ModelError::BadMixedAction(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// Clips tiny negatives and rescales to the simplex. Used on solver output.
    pub fn normalized(mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum > 0.0 {
            weights.iter_mut().for_each(|w| *w /= sum);
        } else {
            let n = weights.len() as f64;
            weights.iter_mut().for_each(|w| *w = 1.0 / n);
        }
        Self(weights)
    }

    pub fn pure(size: usize, action: usize) -> Self {
        let mut w = vec![0.0; size];
        w[action] = 1.0;
        Self(w)
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    /// Convex combination `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Self {
        Self::normalized(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-state mixed actions of one player.
pub type StationaryStrategy = Vec<MixedAction>;

/// One player's strategy, either stationary or a piecewise-constant Markov table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Stationary {
        actions: StationaryStrategy,
    },
    /// `table[k][i]` is used on `[k*dt, (k+1)*dt)`; the last row is held beyond the table.
    Markov {
        dt: f64,
        table: Vec<StationaryStrategy>,
    },
}

impl Strategy {
    pub fn stationary(actions: StationaryStrategy) -> Self {
        Strategy::Stationary { actions }
    }

    pub fn slot(&self, t: f64) -> usize {
        match self {
            Strategy::Stationary { .. } => 0,
            Strategy::Markov { dt, table } => {
                let k = (t / dt).floor();
                if k <= 0.0 {
                    0
                } else {
                    (k as usize).min(table.len() - 1)
                }
            }
        }
    }

    /// Time at which the strategy next changes after `t` (infinite if never).
    pub fn next_switch(&self, t: f64) -> f64 {
        match self {
            Strategy::Stationary { .. } => f64::INFINITY,
            Strategy::Markov { dt, table } => {
                let k = self.slot(t);
                if k + 1 >= table.len() {
                    f64::INFINITY
                } else {
                    let end = (k + 1) as f64 * dt;
                    if end > t {
                        end
                    } else {
                        // floating edge: t sits exactly on a boundary
                        (k + 2) as f64 * dt
                    }
                }
            }
        }
    }

    pub fn at(&self, t: f64, state: usize) -> &MixedAction {
        match self {
            Strategy::Stationary { actions } => &actions[state],
            Strategy::Markov { table, .. } => &table[self.slot(t)][state],
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, Strategy::Stationary { .. })
    }

    fn check(&self, states: usize, actions: usize) -> Result<(), ModelError> {
        let rows: Vec<&StationaryStrategy> = match self {
            Strategy::Stationary { actions } => vec![actions],
            Strategy::Markov { dt, table } => {
                if !(*dt > 0.0) || table.is_empty() {
                    return Err(ModelError::BadParameter(
                        "markov strategy needs dt > 0 and a non-empty table".into(),
                    ));
                }
                table.iter().collect()
            }
        };
        for row in rows {
            if row.len() != states {
                return Err(ModelError::Shape(format!(
                    "strategy covers {} states, model has {states}",
                    row.len()
                )));
            }
            for a in row {
                if a.len() != actions {
                    return Err(ModelError::Shape(format!(
                        "mixed action of size {} for an action set of size {actions}",
                        a.len()
                    )));
                }
                MixedAction::new(a.0.clone())?;
            }
        }
        Ok(())
    }
}

/// Strategies of both players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub player1: Strategy,
    pub player2: Strategy,
}

impl StrategyProfile {
    pub fn stationary(v1: StationaryStrategy, v2: StationaryStrategy) -> Self {
        Self {
            player1: Strategy::stationary(v1),
            player2: Strategy::stationary(v2),
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.player1.is_stationary() && self.player2.is_stationary()
    }

    pub fn next_switch(&self, t: f64) -> f64 {
        self.player1.next_switch(t).min(self.player2.next_switch(t))
    }

    pub fn at(&self, t: f64, state: usize) -> (&MixedAction, &MixedAction) {
        (self.player1.at(t, state), self.player2.at(t, state))
    }

    pub fn check(&self, model: &GameModel) -> Result<(), ModelError> {
        self.player1.check(model.states(), model.actions1())?;
        self.player2.check(model.states(), model.actions2())
    }
}

/// Drift certificate `Pi_v W(i) <= -2 delta W(i) + b 1_C(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovCertificate {
    pub w: Vec<f64>,
    pub delta: f64,
    pub b: f64,
    /// The finite set C (0-based state indices).
    pub c: Vec<usize>,
}

impl LyapunovCertificate {
    pub fn in_c(&self, i: usize) -> bool {
        self.c.contains(&i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    n: usize,
    m1: usize,
    m2: usize,
    rate: Vec<f64>,
    cost: Vec<f64>,
    pub alpha: f64,
    pub theta_cap: f64,
    pub ref_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `M = max_{i,u} -rate[i][i][u]`.
    pub max_exit_rate: f64,
    /// `max cost`.
    pub cost_sup: f64,
    /// Largest row defect absorbed into a diagonal entry.
    pub max_repair: f64,
    pub repaired_rows: usize,
}

impl GameModel {
    pub fn new(
        states: usize,
        actions1: usize,
        actions2: usize,
        rate: Vec<f64>,
        cost: Vec<f64>,
        alpha: f64,
        theta_cap: f64,
        ref_state: usize,
    ) -> Result<Self, ModelError> {
        if states == 0 || actions1 == 0 || actions2 == 0 {
            return Err(ModelError::Shape("empty state or action set".into()));
        }
        if rate.len() != states * states * actions1 * actions2 {
            return Err(ModelError::Shape(format!(
                "rate tensor has {} entries, expected {}",
                rate.len(),
                states * states * actions1 * actions2
            )));
        }
        if cost.len() != states * actions1 * actions2 {
            return Err(ModelError::Shape(format!(
                "cost tensor has {} entries, expected {}",
                cost.len(),
                states * actions1 * actions2
            )));
        }
        if rate.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("rate"));
        }
        if cost.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("cost"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::BadParameter(format!("alpha must be > 0, got {alpha}")));
        }
        if !(theta_cap > 0.0 && theta_cap.is_finite()) {
            return Err(ModelError::BadParameter(format!(
                "theta_cap must be > 0, got {theta_cap}"
            )));
        }
        if ref_state >= states {
            return Err(ModelError::BadParameter(format!(
                "ref_state {ref_state} outside 0..{states}"
            )));
        }
        Ok(Self {
            n: states,
            m1: actions1,
            m2: actions2,
            rate,
            cost,
            alpha,
            theta_cap,
            ref_state,
        })
    }

    /// Builds a model from nested arrays `rate[i][j][u1][u2]` and `cost[i][u1][u2]`.
    pub fn from_nested(
        rate: &[Vec<Vec<Vec<f64>>>],
        cost: &[Vec<Vec<f64>>],
        alpha: f64,
        theta_cap: f64,
        ref_state: usize,
    ) -> Result<Self, ModelError> {
        let n = rate.len();
        let m1 = cost.first().map_or(0, |c| c.len());
        let m2 = cost.first().and_then(|c| c.first()).map_or(0, |c| c.len());
        let mut flat_rate = Vec::with_capacity(n * n * m1 * m2);
        for (i, row) in rate.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::Shape(format!("rate[{i}] has {} targets", row.len())));
            }
            for (j, block) in row.iter().enumerate() {
                if block.len() != m1 || block.iter().any(|r| r.len() != m2) {
                    return Err(ModelError::Shape(format!("rate[{i}][{j}] is not {m1}x{m2}")));
                }
                flat_rate.extend(block.iter().flatten());
            }
        }
        if cost.len() != n {
            return Err(ModelError::Shape(format!(
                "cost has {} states, rate has {n}",
                cost.len()
            )));
        }
        let mut flat_cost = Vec::with_capacity(n * m1 * m2);
        for (i, block) in cost.iter().enumerate() {
            if block.len() != m1 || block.iter().any(|r| r.len() != m2) {
                return Err(ModelError::Shape(format!("cost[{i}] is not {m1}x{m2}")));
            }
            flat_cost.extend(block.iter().flatten());
        }
        Self::new(n, m1, m2, flat_rate, flat_cost, alpha, theta_cap, ref_state)
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn actions1(&self) -> usize {
        self.m1
    }

    pub fn actions2(&self) -> usize {
        self.m2
    }

    #[inline]
    fn rate_index(&self, i: usize, j: usize, u1: usize, u2: usize) -> usize {
        ((i * self.n + j) * self.m1 + u1) * self.m2 + u2
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize, u1: usize, u2: usize) -> f64 {
        self.rate[self.rate_index(i, j, u1, u2)]
    }

    #[inline]
    pub fn cost(&self, i: usize, u1: usize, u2: usize) -> f64 {
        self.cost[(i * self.m1 + u1) * self.m2 + u2]
    }

    /// `m1 x m2` block of rates from `i` to `j`, row-major.
    pub fn rate_block(&self, i: usize, j: usize) -> &[f64] {
        let start = self.rate_index(i, j, 0, 0);
        &self.rate[start..start + self.m1 * self.m2]
    }

    /// `m1 x m2` cost block at state `i`, row-major.
    pub fn cost_block(&self, i: usize) -> &[f64] {
        let start = i * self.m1 * self.m2;
        &self.cost[start..start + self.m1 * self.m2]
    }

    pub fn set_cost(&mut self, i: usize, u1: usize, u2: usize, value: f64) {
        let k = (i * self.m1 + u1) * self.m2 + u2;
        self.cost[k] = value;
    }

    /// `M`: the largest total exit rate over states and pure action pairs.
    pub fn max_exit_rate(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.n {
            for &d in self.rate_block(i, i) {
                m = m.max(-d);
            }
        }
        m
    }

    /// `||r||_inf`.
    pub fn cost_sup(&self) -> f64 {
        self.cost.iter().fold(0.0_f64, |a, &c| a.max(c.abs()))
    }

    /// Uniformization constant `M + ||r|| + 1` used by the semigroup and Perron routines.
    pub fn uniformization_rate(&self) -> f64 {
        self.max_exit_rate() + self.cost_sup() + 1.0
    }

    /// Copy with every cost entry shifted by `c`.
    pub fn with_cost_shift(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.cost.iter_mut().for_each(|x| *x += c);
        out
    }

    /// Copy with every cost entry multiplied by `s`.
    pub fn with_cost_scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.cost.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.alpha = alpha;
        out
    }

    /// Generator `Pi_{v1,v2}` as an `N x N` matrix.
    pub fn generator(&self, v1: &[MixedAction], v2: &[MixedAction]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| bilinear_rate(self, i, j, &v1[i], &v2[i]))
    }

    /// Running cost `r(i, v1(i), v2(i))` per state.
    pub fn cost_vector(&self, v1: &[MixedAction], v2: &[MixedAction]) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| bilinear_cost(self, i, &v1[i], &v2[i]))
    }

    /// `Pi_v + diag(r_v)`, the generator of the multiplicative cost semigroup.
    pub fn cost_generator(&self, v1: &[MixedAction], v2: &[MixedAction]) -> DMatrix<f64> {
        let mut a = self.generator(v1, v2);
        let r = self.cost_vector(v1, v2);
        for i in 0..self.n {
            a[(i, i)] += r[i];
        }
        a
    }
}

fn bilinear(block: &[f64], m2: usize, v1: &MixedAction, v2: &MixedAction) -> f64 {
    let mut acc = 0.0;
    for (u1, &p) in v1.weights().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let row = &block[u1 * m2..(u1 + 1) * m2];
        let inner: f64 = row.iter().zip(v2.weights()).map(|(a, q)| a * q).sum();
        acc += p * inner;
    }
    acc
}

/// Mixed-extension rate `v1^T pi[i][j] v2`.
pub fn bilinear_rate(model: &GameModel, i: usize, j: usize, v1: &MixedAction, v2: &MixedAction) -> f64 {
    bilinear(model.rate_block(i, j), model.m2, v1, v2)
}

/// Mixed-extension cost `v1^T r[i] v2`.
pub fn bilinear_cost(model: &GameModel, i: usize, v1: &MixedAction, v2: &MixedAction) -> f64 {
    bilinear(model.cost_block(i), model.m2, v1, v2)
}

/// Checks sign and conservativity invariants, absorbing row defects of at
/// most [`ROW_REPAIR_TOL`] into the diagonal.
pub fn validate(model: &mut GameModel) -> Result<ValidationReport, ModelError> {
    let (n, m1, m2) = (model.n, model.m1, model.m2);
    let mut max_repair = 0.0_f64;
    let mut repaired_rows = 0;
    for i in 0..n {
        for u1 in 0..m1 {
            for u2 in 0..m2 {
                let mut sum = 0.0;
                for j in 0..n {
                    let x = model.rate(i, j, u1, u2);
                    if j != i && x < 0.0 {
                        return Err(ModelError::NegativeOffDiagonal { i, j, u1, u2, value: x });
                    }
                    sum += x;
                }
                if sum != 0.0 {
                    if sum.abs() > ROW_REPAIR_TOL {
                        return Err(ModelError::NonConservativeRow { i, u1, u2, sum });
                    }
                    let off: f64 = (0..n).filter(|&j| j != i).map(|j| model.rate(i, j, u1, u2)).sum();
                    let k = model.rate_index(i, i, u1, u2);
                    model.rate[k] = -off;
                    max_repair = max_repair.max(sum.abs());
                    repaired_rows += 1;
                }
                let c = model.cost(i, u1, u2);
                if c < 0.0 {
                    return Err(ModelError::NegativeCost { i, u1, u2, value: c });
                }
            }
        }
    }
    Ok(ValidationReport {
        max_exit_rate: model.max_exit_rate(),
        cost_sup: model.cost_sup(),
        max_repair,
        repaired_rows,
    })
}

/// Copy of `model` keeping costs only on the first `n` states.
pub fn truncate_cost(model: &GameModel, n: usize) -> Result<GameModel, ModelError> {
    if n == 0 || n > model.n {
        return Err(ModelError::BadTruncationLevel { n, states: model.n });
    }
    let mut out = model.clone();
    let block = model.m1 * model.m2;
    out.cost[n * block..].iter_mut().for_each(|c| *c = 0.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Per state, `min_u [-2 delta W(i) + b 1_C(i) - Pi_u W(i)]` (non-negative when the drift holds).
    pub worst_slack: Vec<f64>,
    /// Whether `W(i0) >= 1 + b / delta` at the reference state.
    pub ref_state_condition: bool,
}

/// Drift check over pure action pairs. `Pi_v W(i)` is bilinear in `(v1, v2)`,
/// so its maximum over the product of simplices sits at a vertex.
pub fn check_lyapunov(model: &GameModel, cert: &LyapunovCertificate) -> Result<LyapunovReport, ModelError> {
    if cert.w.len() != model.n {
        return Err(ModelError::Shape(format!(
            "certificate W has {} entries for {} states",
            cert.w.len(),
            model.n
        )));
    }
    if cert.w.iter().any(|&w| !(w >= 1.0) || !w.is_finite()) {
        return Err(ModelError::BadParameter("certificate needs W >= 1 everywhere".into()));
    }
    if !(cert.delta > 0.0) || !(cert.b > 0.0) {
        return Err(ModelError::BadParameter("certificate needs delta > 0 and b > 0".into()));
    }
    if let Some(&bad) = cert.c.iter().find(|&&c| c >= model.n) {
        return Err(ModelError::BadParameter(format!("set C contains unknown state {bad}")));
    }
    let mut worst_slack = vec![f64::INFINITY; model.n];
    let mut violation: Option<ModelError> = None;
    let mut worst = 0.0;
    for i in 0..model.n {
        let bound = -2.0 * cert.delta * cert.w[i] + if cert.in_c(i) { cert.b } else { 0.0 };
        for u1 in 0..model.m1 {
            for u2 in 0..model.m2 {
                let drift: f64 = (0..model.n).map(|j| model.rate(i, j, u1, u2) * cert.w[j]).sum();
                let slack = bound - drift;
                worst_slack[i] = worst_slack[i].min(slack);
                // relative tolerance for exact-equality certificates
                let tol = 1e-12 * (1.0 + bound.abs() + drift.abs());
                if slack < -tol && slack < worst {
                    worst = slack;
                    violation = Some(ModelError::CertificateViolated { i, u1, u2, slack });
                }
            }
        }
    }
    if let Some(err) = violation {
        return Err(err);
    }
    let i0 = model.ref_state;
    Ok(LyapunovReport {
        worst_slack,
        ref_state_condition: cert.w[i0] >= 1.0 + cert.b / cert.delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallCostReport {
    pub passed: bool,
    pub theta: f64,
    pub cost_sup: f64,
    /// Supremum of admissible `theta`, `delta / (2 ||r||)`; infinite when `r == 0`.
    pub max_theta: f64,
}

/// Small-cost condition `theta ||r|| < delta / 2` (strict).
pub fn check_small_cost(model: &GameModel, cert: &LyapunovCertificate, theta: f64) -> SmallCostReport {
    let cost_sup = model.cost_sup();
    let max_theta = if cost_sup > 0.0 {
        cert.delta / (2.0 * cost_sup)
    } else {
        f64::INFINITY
    };
    SmallCostReport {
        passed: theta * cost_sup < cert.delta / 2.0,
        theta,
        cost_sup,
        max_theta,
    }
}
