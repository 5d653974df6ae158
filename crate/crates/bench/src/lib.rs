//! Benchmark inputs shared by the criterion benches.

use rsgame_core::fixtures::{drift_chain, random_model};
use rsgame_core::{GameModel, LyapunovCertificate, MatrixGame, MixedAction};

/// `count` square games of side `size` with entries from a fixed linear
/// congruential sequence in `[-1, 1)`.
pub fn matrix_games(size: usize, count: usize) -> Vec<MatrixGame> {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        state = state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    (0..count)
        .map(|_| MatrixGame::new(size, size, (0..size * size).map(|_| next()).collect()).expect("square"))
        .collect()
}

/// Dense model with `n` states and `m x m` actions.
pub fn dense_model(n: usize, m: usize) -> GameModel {
    random_model(17, n, m, m)
}

/// Gated drift chain with `n` states and `m x m` actions.
pub fn gated_model(n: usize, m: usize) -> (GameModel, LyapunovCertificate) {
    drift_chain(23, n, m, m)
}

/// Uniform stationary strategies for both players.
pub fn uniform_pair(model: &GameModel) -> (Vec<MixedAction>, Vec<MixedAction>) {
    (
        vec![MixedAction::uniform(model.actions1()); model.states()],
        vec![MixedAction::uniform(model.actions2()); model.states()],
    )
}
