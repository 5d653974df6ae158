use rsgame_core::ergodic::{evaluate_gates, solve_ergodic, verify_saddle, SaddleOptions};
use rsgame_core::fixtures::{drift_chain, gated_random};
use rsgame_core::lab::{exp_hitting_moment, LabError};
use rsgame_core::model::check_lyapunov;
use rsgame_core::{ErgodicConfig, GameModel, LyapunovCertificate};

/// Two states, one action each: `0 -> 1` at rate 0.5, `1 -> 0` at rate 2.5,
/// cost 0.45 at state 0, reference state 1. `W = (1, 5)`, `delta = 1`,
/// `b = 4`, `C = {0}`: the drift condition holds with equality at both
/// states and `W(i0) = 1 + b / delta`.
fn two_state() -> (GameModel, LyapunovCertificate) {
    let rate = vec![-0.5, 0.5, 2.5, -2.5];
    let m = GameModel::new(2, 1, 1, rate, vec![0.45, 0.0], 1.0, 1.0, 1).unwrap();
    let cert = LyapunovCertificate {
        w: vec![1.0, 5.0],
        delta: 1.0,
        b: 4.0,
        c: vec![0],
    };
    (m, cert)
}

#[test]
fn w_bounds_can_fail_when_c_is_not_the_reference_state() {
    let (m, cert) = two_state();
    let rep = check_lyapunov(&m, &cert).unwrap();
    assert!(rep.worst_slack.iter().all(|&s| s.abs() < 1e-12));
    let gates = evaluate_gates(&m, Some(&cert));
    assert_eq!(gates.lyapunov, Some(true));
    assert_eq!(gates.small_cost, Some(true));
    assert_eq!(gates.ref_state_condition, Some(true));

    let sol = solve_ergodic(&m, Some(&cert), &[], &ErgodicConfig::default()).unwrap();
    // rho psi(0) = 0.45 psi(0) + 0.5 (1 - psi(0)) and rho = 2.5 (psi(0) - 1)
    assert!(sol.rho > 0.0);
    assert!((sol.psi_hat.0[0] - (1.0 + sol.rho / 2.5)).abs() < 1e-9);
    assert!(sol.psi_hat.0[0] > cert.w[0]);

    // leaving state 0 takes an Exp(0.5) time, so E_0[e^tau] diverges
    let err = exp_hitting_moment(&m, &sol.v1_star, &sol.v2_star, 1, cert.delta).unwrap_err();
    assert!(matches!(err, LabError::MomentInfinite { .. }));
}

#[test]
fn w_bounds_hold_on_drift_chains() {
    for (seed, n) in [(1, 4), (2, 7), (3, 9)] {
        let (m, cert) = drift_chain(seed, n, 2, 2);
        let sol = solve_ergodic(&m, Some(&cert), &[], &ErgodicConfig::default()).unwrap();
        let u = exp_hitting_moment(&m, &sol.v1_star, &sol.v2_star, m.ref_state, cert.delta).unwrap();
        for i in 0..n {
            assert!(sol.psi_hat.0[i] <= cert.w[i] * (1.0 + 1e-12), "seed {seed} state {i}");
            assert!(u[i] <= cert.w[i] * (1.0 + 1e-12), "seed {seed} state {i}");
        }
    }
}

#[test]
fn truncation_ladder_is_monotone() {
    let (m, cert) = drift_chain(8, 8, 2, 2);
    let sol = solve_ergodic(&m, Some(&cert), &[2, 4, 6, 8], &ErgodicConfig::default()).unwrap();
    let rhos: Vec<f64> = sol.diagnostics.rho_levels.iter().map(|&(_, r)| r).collect();
    assert_eq!(rhos.len(), 4);
    assert!(rhos.windows(2).all(|w| w[1] >= w[0] - 1e-8), "{rhos:?}");
    assert_eq!(sol.truncation_level, 8);
}

#[test]
fn trivial_certificate_models_solve_and_pass_the_saddle_check() {
    for seed in 0..3 {
        let (m, cert) = gated_random(seed, 4, 2, 3);
        let sol = solve_ergodic(&m, Some(&cert), &[], &ErgodicConfig::default()).unwrap();
        let rep = verify_saddle(&m, &sol, &SaddleOptions::default()).unwrap();
        assert!(rep.exhaustive);
    }
}
