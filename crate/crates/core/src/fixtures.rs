//! Seeded example models used by tests, benches and the CLI self-checks.

use crate::model::{validate, GameModel, LyapunovCertificate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat_index(n: usize, block: usize, i: usize, j: usize, u: usize) -> usize {
    (i * n + j) * block + u
}

/// Dense conservative model: off-diagonal rates in `[0.1, 2)`, costs in `[0, 1)`,
/// `alpha = 1`, `theta_cap = 1`, reference state 0.
pub fn random_model(seed: u64, n: usize, m1: usize, m2: usize) -> GameModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = m1 * m2;
    let mut rate = vec![0.0; n * n * block];
    for i in 0..n {
        for u in 0..block {
            let mut out = 0.0;
            for j in 0..n {
                if j != i {
                    let x: f64 = rng.random_range(0.1..2.0);
                    rate[flat_index(n, block, i, j, u)] = x;
                    out += x;
                }
            }
            rate[flat_index(n, block, i, i, u)] = -out;
        }
    }
    let cost = (0..n * block).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut m = GameModel::new(n, m1, m2, rate, cost, 1.0, 1.0, 0).expect("well-formed");
    validate(&mut m).expect("conservative by construction");
    m
}

/// Sparse variant: each state keeps a ring edge to `i + 1` plus random extra
/// edges with probability `density`; costs in `[0, 1)`.
pub fn random_sparse_model(seed: u64, n: usize, m1: usize, m2: usize, density: f64) -> GameModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = m1 * m2;
    let mut rate = vec![0.0; n * n * block];
    for i in 0..n {
        for u in 0..block {
            let mut out = 0.0;
            for j in 0..n {
                if j != i && (j == (i + 1) % n || rng.random::<f64>() < density) {
                    let x: f64 = rng.random_range(0.1..2.0);
                    rate[flat_index(n, block, i, j, u)] = x;
                    out += x;
                }
            }
            rate[flat_index(n, block, i, i, u)] = -out;
        }
    }
    let cost = (0..n * block).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut m = GameModel::new(n, m1, m2, rate, cost, 1.0, 1.0, 0).expect("well-formed");
    validate(&mut m).expect("conservative by construction");
    m
}

/// One-state game with stage cost matrix `payoff` (row-major `m1 x m2`).
pub fn one_state(payoff: &[f64], m1: usize, m2: usize) -> GameModel {
    GameModel::new(1, m1, m2, vec![0.0; m1 * m2], payoff.to_vec(), 1.0, 1.0, 0).expect("well-formed")
}

/// Two-state birth-death chain (`0 -> 1` at rate 1, `1 -> 0` at rate 4 under
/// every action pair) with 2x2 actions and costs `costs[i * 4 + u1 * 2 + u2]`.
/// Certificate `W = (1, 2)`, `delta = 1`, `b = 3`, `C = {0}`.
pub fn birth_death(costs: [f64; 8]) -> (GameModel, LyapunovCertificate) {
    let mut rate = vec![0.0; 16];
    for u in 0..4 {
        rate[u] = -1.0;
        rate[4 + u] = 1.0;
        rate[8 + u] = 4.0;
        rate[12 + u] = -4.0;
    }
    let mut m = GameModel::new(2, 2, 2, rate, costs.to_vec(), 1.0, 1.0, 0).expect("well-formed");
    validate(&mut m).expect("conservative");
    let cert = LyapunovCertificate {
        w: vec![1.0, 2.0],
        delta: 1.0,
        b: 3.0,
        c: vec![0],
    };
    (m, cert)
}

/// Nearest-neighbour chain on `0..n` drifting to 0 with action-dependent
/// rates, plus resets to 0. Certificate `W(i) = 3^i`, `delta = 1`, `C = {0}`,
/// `b = 2 + 2 max up-rate at 0`; costs lie in `[0, 0.45)` so the small-cost
/// gate `||r|| < delta / 2` holds.
pub fn drift_chain(seed: u64, n: usize, m1: usize, m2: usize) -> (GameModel, LyapunovCertificate) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = m1 * m2;
    let mut rate = vec![0.0; n * n * block];
    let mut up0: f64 = 0.0;
    for i in 0..n {
        for u in 0..block {
            let up: f64 = if i + 1 < n { rng.random_range(0.2..1.0) } else { 0.0 };
            // W(i)^{-1} Pi W(i) = 2 up - (2/3) down - reset (1 - 3^{-i}) <= -2 needs down >= 3 + 3 up
            let down: f64 = if i > 0 {
                rng.random_range(3.5 + 3.0 * up..7.5 + 3.0 * up)
            } else {
                0.0
            };
            let reset: f64 = if i > 1 { rng.random_range(0.0..0.5) } else { 0.0 };
            let mut out = 0.0;
            if i + 1 < n {
                rate[flat_index(n, block, i, i + 1, u)] = up;
                out += up;
            }
            if i > 0 {
                rate[flat_index(n, block, i, i - 1, u)] = down;
                out += down;
            }
            if i > 1 {
                rate[flat_index(n, block, i, 0, u)] = reset;
                out += reset;
            }
            rate[flat_index(n, block, i, i, u)] = -out;
            if i == 0 {
                up0 = up0.max(up);
            }
        }
    }
    let cost = (0..n * block).map(|_| rng.random_range(0.0..0.45)).collect();
    let mut m = GameModel::new(n, m1, m2, rate, cost, 1.0, 1.0, 0).expect("well-formed");
    validate(&mut m).expect("conservative by construction");
    let cert = LyapunovCertificate {
        w: (0..n).map(|i| 3f64.powi(i as i32)).collect(),
        delta: 1.0,
        b: 2.0 + 2.0 * up0 + 0.5,
        c: vec![0],
    };
    (m, cert)
}

/// Dense random model with costs scaled into `[0, 0.45)` and the trivial
/// certificate `W = 1`, `C = S`, `delta = 1`, `b = 2`.
pub fn gated_random(seed: u64, n: usize, m1: usize, m2: usize) -> (GameModel, LyapunovCertificate) {
    let m = random_model(seed, n, m1, m2).with_cost_scale(0.45);
    let cert = LyapunovCertificate {
        w: vec![1.0; n],
        delta: 1.0,
        b: 2.0,
        c: (0..n).collect(),
    };
    (m, cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_lyapunov, check_small_cost};

    #[test]
    fn certificates_hold() {
        let (m, c) = birth_death([0.1, 0.2, 0.3, 0.4, 0.0, 0.1, 0.2, 0.3]);
        check_lyapunov(&m, &c).unwrap();
        assert!(check_small_cost(&m, &c, 1.0).passed);
        for seed in 0..20 {
            let (m, c) = drift_chain(seed, 6, 2, 3);
            check_lyapunov(&m, &c).unwrap();
            assert!(check_small_cost(&m, &c, 1.0).passed);
            let (m, c) = gated_random(seed, 5, 3, 2);
            check_lyapunov(&m, &c).unwrap();
            assert!(check_small_cost(&m, &c, 1.0).passed);
        }
    }
}
