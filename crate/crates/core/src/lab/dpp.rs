//! Monte Carlo check of the multiplicative dynamic programming identity
//! `psi(t, i) = E_i[exp(int_0^{t ^ tau} r ds) psi(t - t ^ tau, Y(t ^ tau))]`
//! for the finite-horizon value, `tau` the hitting time of a set `S~`.

use super::sim::{check_inputs, mc_samples, walk, Sampler};
use super::{LabError, McEstimate};
use crate::ergodic::MarchHistory;
use crate::model::{bilinear_cost, GameModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppReport {
    pub start: usize,
    pub horizon: f64,
    pub target_set: Vec<usize>,
    /// `psi(t, i)` from the march.
    pub value: f64,
    pub estimate: McEstimate,
    /// `(estimate - value) / stderr` (zero when both agree exactly).
    pub z_score: f64,
    pub passed: bool,
}

/// Simulates under the saddle profile recorded in `history` for the horizon
/// `t` (rounded to the march step) and compares against `history.value`.
pub fn multiplicative_dpp_check(
    model: &GameModel,
    history: &MarchHistory,
    target_set: &[usize],
    t: f64,
    start: usize,
    n_paths: usize,
    seed: u64,
    sigmas: f64,
) -> Result<DppReport, LabError> {
    let steps = (t / history.dt).round() as usize;
    if steps == 0 || steps >= history.log_ref.len() {
        return Err(LabError::BadParameter(format!(
            "horizon {t} outside the recorded march (0, {}]",
            history.horizon()
        )));
    }
    let horizon = steps as f64 * history.dt;
    let profile = history.profile(steps);
    check_inputs(model, &profile, start, horizon)?;
    let mut in_set = vec![false; model.states()];
    for &s in target_set {
        if s >= model.states() {
            return Err(LabError::BadParameter(format!("target state {s} out of range")));
        }
        in_set[s] = true;
    }
    let xs = mc_samples(n_paths, seed, |rng| {
        let mut integral = 0.0;
        let (mut stop_time, mut stop_state) = (horizon, start);
        walk(model, &profile, start, horizon, Sampler::Exact, rng, |s| {
            stop_state = s.state;
            if in_set[s.state] {
                stop_time = s.t0;
                return false;
            }
            integral += bilinear_cost(model, s.state, s.v1, s.v2) * (s.t1 - s.t0);
            true
        });
        integral.exp() * history.value(horizon - stop_time, stop_state)
    });
    let estimate = McEstimate::from_samples(&xs);
    let value = history.value(horizon, start);
    let gap = estimate.mean - value;
    let z_score = if gap.abs() <= 1e-12 * value.abs().max(1.0) {
        0.0
    } else if estimate.stderr > 0.0 {
        gap / estimate.stderr
    } else {
        f64::INFINITY
    };
    Ok(DppReport {
        start,
        horizon,
        target_set: target_set.to_vec(),
        value,
        estimate,
        z_score,
        passed: estimate.agrees_with(value, sigmas),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::march_history;
    use crate::hamiltonian::tests::random_model;

    #[test]
    fn whole_space_is_identity() {
        let m = random_model(1, 3, 2, 2);
        let h = march_history(&m, 1.0, 0.01).unwrap();
        let r = multiplicative_dpp_check(&m, &h, &[0, 1, 2], 1.0, 1, 100, 3, 3.0).unwrap();
        assert!(r.estimate.stderr < 1e-14);
        assert!((r.estimate.mean - r.value).abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn proper_subset_agrees() {
        let m = random_model(2, 3, 2, 2);
        let h = march_history(&m, 1.0, 0.01).unwrap();
        for set in [vec![], vec![0], vec![1, 2]] {
            let r = multiplicative_dpp_check(&m, &h, &set, 1.0, 1, 10_000, 5, 3.0).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }
}
