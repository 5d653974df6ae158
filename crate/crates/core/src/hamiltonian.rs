//! Per-state Isaacs min-max: the stage matrix
//! `G[u1][u2] = sum_j pi[i][j][u1][u2] psi(j) + w r[i][u1][u2] psi(i)`
//! and its matrix-game value and saddle selectors.

use crate::matrix_game::{solve_matrix_game, GameError, GameSolution, MatrixGame};
use crate::model::{GameModel, MixedAction};
use serde::{Deserialize, Serialize};

/// Positive per-state values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn constant(states: usize, k: f64) -> Self {
        Self(vec![k; states])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianResult {
    pub value: Vec<f64>,
    pub v1: Vec<MixedAction>,
    pub v2: Vec<MixedAction>,
}

pub fn stage_matrix(model: &GameModel, i: usize, psi: &[f64], weight: f64) -> MatrixGame {
    let (m1, m2) = (model.actions1(), model.actions2());
    let mut g: Vec<f64> = model.cost_block(i).iter().map(|c| weight * c * psi[i]).collect();
    for (j, &pj) in psi.iter().enumerate() {
        if pj == 0.0 {
            continue;
        }
        for (gk, &r) in g.iter_mut().zip(model.rate_block(i, j)) {
            *gk += r * pj;
        }
    }
    MatrixGame::new(m1, m2, g).expect("stage matrix of a valid model is finite")
}

/// Solves every state's stage game.
pub fn hamiltonian_eval(model: &GameModel, psi: &[f64], weight: f64) -> Result<HamiltonianResult, GameError> {
    let n = model.states();
    let mut out = HamiltonianResult {
        value: Vec::with_capacity(n),
        v1: Vec::with_capacity(n),
        v2: Vec::with_capacity(n),
    };
    for i in 0..n {
        let GameSolution { value, p_star, q_star } = solve_matrix_game(&stage_matrix(model, i, psi, weight))?;
        out.value.push(value);
        out.v1.push(p_star);
        out.v2.push(q_star);
    }
    Ok(out)
}

/// Values only; same contract as [`hamiltonian_eval`].
pub fn hamiltonian_values(model: &GameModel, psi: &[f64], weight: f64) -> Result<Vec<f64>, GameError> {
    (0..model.states())
        .map(|i| solve_matrix_game(&stage_matrix(model, i, psi, weight)).map(|s| s.value))
        .collect()
}
