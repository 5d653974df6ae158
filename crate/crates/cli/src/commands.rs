//! Command implementations. Each command fills a [`RunReport`]; errors are
//! recorded in the report rather than returned.

use crate::args::{
    argv_for, Cli, Command, SimulateArgs, SolveDiscountedArgs, SolveErgodicArgs, ValidateArgs, VerifyArgs,
};
use crate::files::{load_model, load_profile, load_solution, write_json, LoadedModel, SolutionFile, SCHEMA_VERSION};
use crate::report::{Check, CommandEcho, ErrorKind, Outcome, Relation, RunReport};
use rsgame_core::discounted::{extract_markov_policy, refine_epsilon};
use rsgame_core::ergodic::{
    evaluate_gates, perron_value, random_stationary, saddle_margins, solve_ergodic, ErgodicError, SaddleOptions,
};
use rsgame_core::lab::{
    build_twisted_chain, d_of_rho, estimate_discounted, estimate_ergodic_growth, exp_hitting_moment, feynman_kac,
    multiplicative_dpp_check, return_moment_check, simulate_path, LabError, McEstimate,
};
use rsgame_core::model::{check_lyapunov, check_small_cost, truncate_cost};
use rsgame_core::{
    DiscountedConfig, DiscountedError, ErgodicConfig, ErgodicSolution, GameModel, MixedAction, Strategy, ValueFunction,
};
use serde_json::json;
use std::path::Path;
use std::time::Instant;

/// Runs one command and returns its finalized report.
pub fn execute(cli: &Cli) -> RunReport {
    let name = cli.command.name();
    let options = cli.command.options();
    let argv = argv_for(name, &options, cli.threads);
    let mut report = RunReport::new(CommandEcho {
        name: name.into(),
        options,
        argv,
    });
    let start = Instant::now();
    match &cli.command {
        Command::Validate(a) => cmd_validate(a, &mut report),
        Command::SolveDiscounted(a) => cmd_solve_discounted(a, &mut report),
        Command::SolveErgodic(a) => cmd_solve_ergodic(a, &mut report),
        Command::Verify(a) => cmd_verify(a, &mut report),
        Command::Simulate(a) => cmd_simulate(a, &mut report),
    }
    report.timings.insert("total".into(), start.elapsed().as_secs_f64());
    report.finalize();
    report
}

fn timed<T>(report: &mut RunReport, key: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    report.timings.insert(key.into(), start.elapsed().as_secs_f64());
    out
}

fn load(report: &mut RunReport, path: &Path) -> Option<LoadedModel> {
    match timed(report, "load", || load_model(path)) {
        Ok(lm) => {
            report.model_sha256 = Some(lm.sha256.clone());
            let m = &lm.model;
            report.put(
                "model",
                json!({
                    "states": m.states(),
                    "actions1": m.actions1(),
                    "actions2": m.actions2(),
                    "alpha": m.alpha,
                    "theta_cap": m.theta_cap,
                    "ref_state": m.ref_state,
                    "max_exit_rate": m.max_exit_rate(),
                    "cost_sup": m.cost_sup(),
                    "validation": lm.validation,
                    "has_certificate": lm.certificate.is_some(),
                }),
            );
            Some(lm)
        }
        Err(e) => {
            report.fail(ErrorKind::Input, e);
            None
        }
    }
}

fn discounted_kind(e: &DiscountedError) -> ErrorKind {
    match e {
        DiscountedError::BadParameter(_) | DiscountedError::HorizonBeyondEpsilon { .. } => ErrorKind::Input,
        _ => ErrorKind::NoConvergence,
    }
}

fn ergodic_kind(e: &ErgodicError) -> ErrorKind {
    match e {
        ErgodicError::GateFailed { .. } => ErrorKind::Gate,
        ErgodicError::BadParameter(_) | ErgodicError::StepUnstable { .. } | ErgodicError::Model(_) => ErrorKind::Input,
        _ => ErrorKind::NoConvergence,
    }
}

fn lab_kind(e: &LabError) -> ErrorKind {
    match e {
        LabError::BadParameter(_) | LabError::Model(_) => ErrorKind::Input,
        _ => ErrorKind::NoConvergence,
    }
}

/// `(mean - target) / stderr`, zero for an exact match with no spread.
fn z_score(est: &McEstimate, target: f64) -> f64 {
    let gap = est.mean - target;
    if est.stderr > 0.0 {
        gap / est.stderr
    } else if gap.abs() <= 1e-12 * target.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}

fn cmd_validate(a: &ValidateArgs, r: &mut RunReport) {
    let Some(lm) = load(r, &a.model) else { return };
    let model = &lm.model;
    let Some(cert) = &lm.certificate else {
        r.gates = Some(evaluate_gates(model, None));
        r.check(Check::skipped(
            "lyapunov_min_slack",
            Relation::AtLeast,
            0.0,
            "no certificate in the model file".into(),
        ));
        r.check(Check::skipped(
            "small_cost",
            Relation::AtMost,
            0.0,
            "no certificate in the model file".into(),
        ));
        return;
    };
    let mut gates = evaluate_gates(model, Some(cert));
    let w_max = cert.w.iter().copied().fold(1.0, f64::max);
    let slack_tol = -1e-12 * (1.0 + cert.b + (2.0 * cert.delta + 2.0 * model.max_exit_rate()) * w_max);
    match check_lyapunov(model, cert) {
        Ok(rep) => {
            let min_slack = rep.worst_slack.iter().copied().fold(f64::INFINITY, f64::min);
            let mut c = Check::new("lyapunov_min_slack", min_slack, Relation::AtLeast, slack_tol, true);
            c.outcome = Outcome::Pass;
            r.check(c);
            r.put("lyapunov", &rep);
        }
        Err(e) => {
            r.check(Check::failed(
                "lyapunov_min_slack",
                Relation::AtLeast,
                slack_tol,
                true,
                e.to_string(),
            ));
            r.fail(ErrorKind::Gate, format!("lyapunov gate failed: {e}"));
        }
    }
    let sc = check_small_cost(model, cert, a.theta);
    gates.small_cost = Some(sc.passed);
    gates.small_cost_max_theta = Some(sc.max_theta);
    let mut c = Check::new(
        "small_cost",
        a.theta * sc.cost_sup,
        Relation::AtMost,
        cert.delta / 2.0,
        true,
    )
    .with_detail("strict: theta ||r|| < delta / 2");
    c.outcome = if sc.passed { Outcome::Pass } else { Outcome::Fail };
    r.check(c);
    r.put("small_cost", &sc);
    if !sc.passed && r.error.is_none() {
        r.fail(
            ErrorKind::Gate,
            format!("small-cost gate failed at theta = {}", a.theta),
        );
    }
    r.gates = Some(gates);
}

fn cmd_solve_discounted(a: &SolveDiscountedArgs, r: &mut RunReport) {
    let Some(lm) = load(r, &a.model) else { return };
    let model = &lm.model;
    let cfg = DiscountedConfig {
        epsilon: a.epsilon,
        safety: a.safety,
        picard_tol: a.picard_tol,
        residual_tol: a.residual_tol,
        ..DiscountedConfig::default()
    };
    let sol = match timed(r, "solve", || {
        refine_epsilon(model, &cfg, a.theta, a.tol, a.max_halvings)
    }) {
        Ok(s) => s,
        Err(e) => {
            r.fail(discounted_kind(&e), e);
            return;
        }
    };
    let t_eps = (a.theta / sol.epsilon).ln() / model.alpha;
    let horizon = a.horizon.unwrap_or(t_eps);
    let policy = match extract_markov_policy(&sol, a.theta, horizon, a.policy_dt, true) {
        Ok(p) => p,
        Err(e) => {
            r.fail(discounted_kind(&e), e);
            return;
        }
    };
    let n = model.states();
    let psi_theta: Vec<f64> = (0..n).map(|i| sol.value_at(a.theta, i)).collect();
    r.put("theta", a.theta);
    r.put("epsilon", sol.epsilon);
    r.put("psi_at_theta", &psi_theta);
    r.put("theta_grid", &sol.theta_grid);
    r.put("psi", &sol.psi);
    r.put("diagnostics", &sol.diagnostics);
    r.put("policy", &policy);

    let norm = model.cost_sup() / model.alpha;
    let lower = sol.psi.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let upper = sol
        .theta_grid
        .iter()
        .zip(&sol.psi)
        .flat_map(|(t, row)| row.iter().map(move |p| p / (t * norm).exp()))
        .fold(0.0, f64::max);
    r.check(Check::new("psi_lower_bound", lower, Relation::AtLeast, 1.0, true).with_detail("min psi over the grid"));
    r.check(
        Check::new("psi_upper_bound_ratio", upper, Relation::AtMost, 1.0 + 1e-12, true)
            .with_detail("max psi(theta, i) / exp(theta ||r|| / alpha) over the grid"),
    );
    let d = &sol.diagnostics;
    r.check(Check::new(
        "hji_residual",
        d.residual,
        Relation::AtMost,
        a.residual_tol * d.psi_sup,
        true,
    ));
    if let Some(&last) = d.refine_history.last() {
        r.check(Check::new(
            "epsilon_refinement_change",
            last,
            Relation::AtMost,
            a.tol,
            true,
        ));
    }
}

fn write_solution(path: &Path, sol: &ErgodicSolution, n: usize) -> Result<(), crate::files::FileError> {
    let file = SolutionFile {
        schema: SCHEMA_VERSION,
        rho: sol.rho,
        psi_hat: sol.psi_hat.0.clone(),
        v1_star: sol.v1_star.clone(),
        v2_star: sol.v2_star.clone(),
        truncation_level: (sol.truncation_level != n).then_some(sol.truncation_level),
    };
    write_json(path, &file)
}

/// Perron cross-check of a stationary solution on the (truncated) model.
fn perron_checks(r: &mut RunReport, model: &GameModel, sol: &ErgodicSolution, tol: f64) {
    match perron_value(model, &sol.v1_star, &sol.v2_star) {
        Ok(p) => {
            let scale = sol.psi_hat.0.iter().copied().fold(0.0, f64::max);
            let gap = p
                .eigvec
                .iter()
                .zip(&sol.psi_hat.0)
                .map(|(e, s)| (e - s).abs())
                .fold(0.0, f64::max)
                / scale;
            r.check(Check::new(
                "perron_rho_gap",
                (p.lambda - sol.rho).abs(),
                Relation::AtMost,
                tol,
                true,
            ));
            r.check(
                Check::new("perron_vector_gap", gap, Relation::AtMost, tol, true)
                    .with_detail("sup |eigvec - psi_hat| / sup psi_hat"),
            );
            r.put("perron", &p);
        }
        Err(ErgodicError::NotIrreducible) => {
            let why = "chain under the saddle pair is reducible".to_string();
            r.check(Check::skipped("perron_rho_gap", Relation::AtMost, tol, why.clone()));
            r.check(Check::skipped("perron_vector_gap", Relation::AtMost, tol, why));
        }
        Err(e) => {
            r.check(Check::failed(
                "perron_rho_gap",
                Relation::AtMost,
                tol,
                true,
                e.to_string(),
            ));
        }
    }
}

/// `psi_hat <= W` and `E_i[exp(delta tau_i0)] <= W`. Both follow from the drift
/// inequality when `C = {i0}`; for other certificates they are reported as
/// diagnostics only, since they can fail there.
fn w_checks(r: &mut RunReport, model: &GameModel, lm: &LoadedModel, sol: &ErgodicSolution, gated: bool) {
    let Some(cert) = &lm.certificate else { return };
    let i0 = model.ref_state;
    let singleton = cert.c.iter().all(|&c| c == i0) && !cert.c.is_empty();
    let required = gated && singleton;
    let note = if required {
        ""
    } else {
        "; diagnostic (gates failed or C != {i0})"
    };
    let ratio = sol
        .psi_hat
        .0
        .iter()
        .zip(&cert.w)
        .map(|(p, w)| p / w)
        .fold(0.0, f64::max);
    r.check(
        Check::new("psi_hat_over_w", ratio, Relation::AtMost, 1.0 + 1e-9, required)
            .with_detail(format!("max psi_hat(i) / W(i){note}")),
    );
    let name = "hitting_moment_over_w";
    match exp_hitting_moment(model, &sol.v1_star, &sol.v2_star, i0, cert.delta) {
        Ok(u) => {
            let ratio = u.iter().zip(&cert.w).map(|(u, w)| u / w).fold(0.0, f64::max);
            r.check(
                Check::new(name, ratio, Relation::AtMost, 1.0 + 1e-9, required)
                    .with_detail(format!("max E_i[exp(delta tau_i0)] / W(i){note}")),
            );
            r.put("hitting_moment", &u);
        }
        Err(e) => r.check(Check::failed(
            name,
            Relation::AtMost,
            1.0 + 1e-9,
            required,
            format!("{e}{note}"),
        )),
    }
}

fn cmd_solve_ergodic(a: &SolveErgodicArgs, r: &mut RunReport) {
    let Some(lm) = load(r, &a.model) else { return };
    let model = &lm.model;
    let cert = lm.certificate.as_ref();
    let cfg = ErgodicConfig {
        t_max: a.tmax,
        dt: a.dt,
        tol: a.tol,
        residual_tol: a.residual_tol,
        override_gates: a.override_gates,
        ..ErgodicConfig::default()
    };
    let sol = match timed(r, "solve", || solve_ergodic(model, cert, &a.levels, &cfg)) {
        Ok(s) => s,
        Err(e) => {
            r.gates = Some(evaluate_gates(model, cert));
            r.fail(ergodic_kind(&e), e);
            return;
        }
    };
    r.gates = Some(sol.diagnostics.gates.clone());
    r.put("rho", sol.rho);
    r.put("psi_hat", &sol.psi_hat);
    r.put("v1_star", &sol.v1_star);
    r.put("v2_star", &sol.v2_star);
    r.put("truncation_level", sol.truncation_level);
    r.put("diagnostics", &sol.diagnostics);
    let d = &sol.diagnostics;
    r.check(
        Check::new("ergodic_residual", d.residual, Relation::AtMost, d.residual_limit, true)
            .with_detail("max_i |rho psi_hat(i) - H(psi_hat)(i)|"),
    );
    let truncated = truncate_cost(model, sol.truncation_level).expect("level checked by the solver");
    let start = Instant::now();
    perron_checks(r, &truncated, &sol, a.perron_tol);
    w_checks(r, model, &lm, &sol, !d.gates.overridden);
    r.timings.insert("checks".into(), start.elapsed().as_secs_f64());
    if let Some(path) = &a.solution_out {
        if let Err(e) = write_solution(path, &sol, model.states()) {
            r.fail(ErrorKind::Input, e);
        }
    }
}

fn cmd_verify(a: &VerifyArgs, r: &mut RunReport) {
    r.seed = Some(a.seed);
    let Some(lm) = load(r, &a.model) else { return };
    let model = &lm.model;
    let cert = lm.certificate.as_ref();
    let file = match load_solution(&a.solution, model) {
        Ok(f) => f,
        Err(e) => {
            r.fail(ErrorKind::Input, e);
            return;
        }
    };
    let mut gates = evaluate_gates(model, cert);
    let gated = gates.lyapunov == Some(true) && gates.small_cost == Some(true);
    if !gated {
        if !a.override_gates {
            r.gates = Some(gates);
            r.fail(
                ErrorKind::Gate,
                "lyapunov or small-cost gate failed (or no certificate)",
            );
            return;
        }
        gates.overridden = true;
    }
    r.gates = Some(gates);
    let n = model.states();
    let level = file.truncation_level.unwrap_or(n);
    let tm = truncate_cost(model, level).expect("level checked on load");
    let sol = ErgodicSolution {
        rho: file.rho,
        psi_hat: ValueFunction(file.psi_hat.clone()),
        v1_star: file.v1_star.clone(),
        v2_star: file.v2_star.clone(),
        truncation_level: level,
        diagnostics: Default::default(),
    };
    let (v1, v2) = (&sol.v1_star, &sol.v2_star);
    let i0 = model.ref_state;
    let start = Instant::now();

    match rsgame_core::ergodic::ergodic_residual(&tm, sol.rho, &sol.psi_hat.0) {
        Ok((res, _)) => r.check(
            Check::new(
                "ergodic_residual",
                res,
                Relation::AtMost,
                a.residual_tol * sol.rho.abs().max(1.0),
                true,
            )
            .with_detail("max_i |rho psi_hat(i) - H(psi_hat)(i)|"),
        ),
        Err(e) => {
            r.fail(ErrorKind::NoConvergence, e);
            return;
        }
    }
    perron_checks(r, &tm, &sol, a.tol);
    let opts = SaddleOptions {
        mixed_per_player: a.mixed,
        seed: a.seed,
        tol: a.tol,
        ..SaddleOptions::default()
    };
    let saddle = saddle_margins(&tm, &sol, &opts);
    r.check(
        Check::new(
            "saddle_player2_margin",
            saddle.player2_margin,
            Relation::AtMost,
            a.tol,
            true,
        )
        .with_detail("max over deviations v2 of lambda(v1*, v2) - rho"),
    );
    r.check(
        Check::new(
            "saddle_player1_margin",
            saddle.player1_margin,
            Relation::AtLeast,
            -a.tol,
            true,
        )
        .with_detail("min over deviations v1 of lambda(v1, v2*) - rho"),
    );
    r.put("saddle", &saddle);
    r.timings.insert("saddle".into(), start.elapsed().as_secs_f64());

    let start = Instant::now();
    w_checks(r, model, &lm, &sol, gated);
    twisted_checks(a, r, &tm, &sol, cert);
    r.timings.insert("bounds".into(), start.elapsed().as_secs_f64());

    let start = Instant::now();
    dpp_checks(a, r, &tm, i0);
    growth_check(a, r, &tm, v1, v2, i0);
    r.timings.insert("monte_carlo".into(), start.elapsed().as_secs_f64());
}

fn twisted_checks(
    a: &VerifyArgs,
    r: &mut RunReport,
    tm: &GameModel,
    sol: &ErgodicSolution,
    cert: Option<&rsgame_core::LyapunovCertificate>,
) {
    let (n, i0) = (tm.states(), tm.ref_state);
    let mut v2s = vec![sol.v2_star.clone()];
    v2s.extend(random_stationary(a.seed, 3, a.d_deviations, n, tm.actions2()));
    let mut values = Vec::new();
    let mut failure = None;
    for v2 in &v2s {
        match build_twisted_chain(tm, &sol.v1_star, v2).and_then(|c| d_of_rho(&c, sol.rho, i0)) {
            Ok(d) => values.push(d),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let tol = 1.0 + a.tol;
    match failure {
        None => {
            let worst = values.iter().map(|d| d.value).fold(f64::NEG_INFINITY, f64::max);
            r.check(
                Check::new("twisted_return_functional", worst, Relation::AtMost, tol, false)
                    .with_detail("max D(rho) at the reference state over v2* and random v2; diagnostic"),
            );
        }
        Some(e) => r.check(Check::failed(
            "twisted_return_functional",
            Relation::AtMost,
            tol,
            false,
            e,
        )),
    }
    r.put("twisted_return_functional", &values);

    let Some(cert) = cert else { return };
    let report = build_twisted_chain(tm, &sol.v1_star, &sol.v2_star).and_then(|c| return_moment_check(&c, cert));
    match report {
        Ok(rep) if rep.c0.is_empty() => {
            let mut c = Check::skipped(
                "twisted_return_moment_margin",
                Relation::AtLeast,
                -1e-9,
                "C0 is empty; bound holds vacuously".into(),
            );
            c.outcome = Outcome::Pass;
            r.check(c);
            r.put("return_moment", &rep);
        }
        Ok(rep) => {
            let infinite: Vec<usize> = rep
                .entries
                .iter()
                .filter(|e| e.moment.is_none())
                .map(|e| e.state)
                .collect();
            let mut c = Check::new(
                "twisted_return_moment_margin",
                rep.worst_margin,
                Relation::AtLeast,
                -1e-9,
                false,
            )
            .with_detail("min over C0 of bound - E~[exp(delta tau / 2)]; diagnostic");
            if !infinite.is_empty() {
                c = c.with_detail(format!("return moment infinite at states {infinite:?}; diagnostic"));
            }
            r.check(c);
            r.put("return_moment", &rep);
        }
        Err(e) => r.check(Check::failed(
            "twisted_return_moment_margin",
            Relation::AtLeast,
            -1e-9,
            false,
            e.to_string(),
        )),
    }
}

fn dpp_checks(a: &VerifyArgs, r: &mut RunReport, tm: &GameModel, i0: usize) {
    let n = tm.states();
    let dt = ErgodicConfig::default().step_for(tm);
    let history = match rsgame_core::ergodic::march_history(tm, a.dpp_horizon, dt) {
        Ok(h) => h,
        Err(e) => {
            r.fail(ergodic_kind(&e), e);
            return;
        }
    };
    let start = if i0 + 1 < n { n - 1 } else { 0 };
    let mut sets: Vec<Vec<usize>> = vec![vec![], vec![i0]];
    let evens: Vec<usize> = (0..n).filter(|&j| j % 2 == 0 && j != start).collect();
    if !sets.contains(&evens) {
        sets.push(evens);
    }
    let mut reports = Vec::new();
    for (k, set) in sets.iter().enumerate() {
        let seed = a.seed.wrapping_add(100 + k as u64);
        match multiplicative_dpp_check(tm, &history, set, a.dpp_horizon, start, a.paths, seed, a.sigmas) {
            Ok(rep) => {
                r.check(
                    Check::new(
                        &format!("dpp_z_score_set{k}"),
                        rep.z_score,
                        Relation::WithinSigmas,
                        a.sigmas,
                        true,
                    )
                    .with_detail(format!("stopping set {set:?}, start {start}")),
                );
                reports.push(rep);
            }
            Err(e) => {
                r.fail(lab_kind(&e), e);
                return;
            }
        }
    }
    r.put("dpp", &reports);
}

fn growth_check(a: &VerifyArgs, r: &mut RunReport, tm: &GameModel, v1: &[MixedAction], v2: &[MixedAction], i0: usize) {
    let t = a.growth_horizon;
    let seed = a.seed.wrapping_add(200);
    let est = match estimate_ergodic_growth(tm, v1, v2, i0, t, a.paths, seed) {
        Ok(e) => e,
        Err(e) => {
            r.fail(lab_kind(&e), e);
            return;
        }
    };
    let exact = match feynman_kac(tm, v1, v2, t) {
        Ok(k) => k.row(i0).sum(),
        Err(e) => {
            r.fail(lab_kind(&e), e);
            return;
        }
    };
    let z = z_score(&est.moment, exact);
    r.check(
        Check::new("growth_moment_z_score", z, Relation::WithinSigmas, a.sigmas, true)
            .with_detail("simulated E[exp(int r)] at the saddle pair against the exact semigroup"),
    );
    r.put(
        "growth",
        json!({ "horizon": t, "estimate": est, "exact_moment": exact }),
    );
}

fn cmd_simulate(a: &SimulateArgs, r: &mut RunReport) {
    r.seed = Some(a.seed);
    let Some(lm) = load(r, &a.model) else { return };
    let model = &lm.model;
    let file = match load_profile(&a.profile, model) {
        Ok(f) => f,
        Err(e) => {
            r.fail(ErrorKind::Input, e);
            return;
        }
    };
    let profile = file.profile();
    let start = a.start.unwrap_or(model.ref_state);
    let sampler = a.sampler.into();
    let begin = Instant::now();
    if let Some(theta) = a.theta {
        match estimate_discounted(model, &profile, theta, start, a.horizon, a.paths, a.seed, sampler) {
            Ok(e) => r.put("discounted", e),
            Err(e) => {
                r.fail(lab_kind(&e), e);
                return;
            }
        }
    }
    if let (Strategy::Stationary { actions: v1 }, Strategy::Stationary { actions: v2 }) =
        (&profile.player1, &profile.player2)
    {
        match estimate_ergodic_growth(model, v1, v2, start, a.horizon, a.paths, a.seed.wrapping_add(1)) {
            Ok(e) => r.put("growth", e),
            Err(e) => {
                r.fail(lab_kind(&e), e);
                return;
            }
        }
    }
    if a.record_path {
        match simulate_path(model, &profile, start, a.horizon, a.seed, sampler) {
            Ok(p) => r.put(
                "path",
                json!({ "states": p.states, "jump_times": p.jump_times, "absorbed": p.absorbed }),
            ),
            Err(e) => {
                r.fail(lab_kind(&e), e);
                return;
            }
        }
    }
    r.timings.insert("simulate".into(), begin.elapsed().as_secs_f64());
}
