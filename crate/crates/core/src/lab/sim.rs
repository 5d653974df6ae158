//! Sample paths of the controlled chain.
//!
//! The chain is driven by a Poisson random measure on `[0, inf) x R` with
//! Lebesgue intensity: in state `i` under the pair `v`, a point `(t, z)` with
//! `z` in the interval `Delta_ij(v)` moves the chain to `j`. The intervals are
//! packed from 0 in ascending `j` and have lengths `pi_ij(v)`. Only `z` in
//! `[0, M)` can matter, so the literal sampler draws candidate times at rate
//! `M` and accepts by locating `z`. For stationary profiles the default
//! sampler uses the equivalent exponential sojourn / jump-chain description.

use super::{LabError, McEstimate};
use crate::model::{bilinear_cost, bilinear_rate, GameModel, MixedAction, StrategyProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `Delta_ij(v)` for one state and pair: `(j, start, end)` in ascending `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpLayout {
    pub state: usize,
    pub intervals: Vec<(usize, f64, f64)>,
    /// `-pi_ii(v)`.
    pub total: f64,
}

impl JumpLayout {
    pub fn new(model: &GameModel, i: usize, v1: &MixedAction, v2: &MixedAction) -> Self {
        let mut intervals = Vec::with_capacity(model.states());
        let mut edge = 0.0;
        for j in 0..model.states() {
            if j == i {
                continue;
            }
            let len = bilinear_rate(model, i, j, v1, v2);
            intervals.push((j, edge, edge + len));
            edge += len;
        }
        Self {
            state: i,
            intervals,
            total: -bilinear_rate(model, i, i, v1, v2),
        }
    }

    /// Target of a point at height `z`, if any.
    pub fn locate(&self, z: f64) -> Option<usize> {
        let k = self.intervals.partition_point(|&(_, _, end)| end <= z);
        self.intervals
            .get(k)
            .filter(|&&(_, start, end)| z >= start && end > start)
            .map(|&(j, _, _)| j)
    }

    /// Jump target for `u` uniform on `[0, 1)`, robust to rounding at the top edge.
    fn pick(&self, u: f64) -> usize {
        let sum = self.intervals.last().map_or(0.0, |x| x.2);
        self.locate(u * sum).unwrap_or_else(|| {
            self.intervals
                .iter()
                .rev()
                .find(|x| x.2 > x.1)
                .map(|x| x.0)
                .expect("positive exit rate has a target")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Exponential sojourns for stationary profiles, thinning for Markov ones.
    #[default]
    Exact,
    /// Thinning against `M` with the interval layout everywhere.
    Literal,
}

/// Piece of a path with constant state and constant action pair.
pub(crate) struct Segment<'a> {
    pub state: usize,
    pub t0: f64,
    pub t1: f64,
    pub v1: &'a MixedAction,
    pub v2: &'a MixedAction,
}

pub(crate) fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Walks one path on `[0, t_end)`, calling `f` on each segment until it
/// returns `false`. Returns whether the path ended in an absorbing sojourn.
pub(crate) fn walk<'p>(
    model: &GameModel,
    profile: &'p StrategyProfile,
    start: usize,
    t_end: f64,
    sampler: Sampler,
    rng: &mut ChaCha8Rng,
    mut f: impl FnMut(&Segment<'p>) -> bool,
) -> bool {
    let literal = sampler == Sampler::Literal || !profile.is_stationary();
    let bound = model.max_exit_rate();
    let (mut t, mut i) = (0.0, start);
    while t < t_end {
        let sw = profile.next_switch(t).min(t_end);
        // midpoint lookup keeps slot boundaries robust to rounding
        let (v1, v2) = profile.at(0.5 * (t + sw), i);
        let layout = JumpLayout::new(model, i, v1, v2);
        if !literal {
            let q = layout.total;
            if !(q > 0.0) {
                f(&Segment {
                    state: i,
                    t0: t,
                    t1: t_end,
                    v1,
                    v2,
                });
                return true;
            }
            let tau = exp_draw(rng, q);
            if t + tau >= sw {
                if !f(&Segment {
                    state: i,
                    t0: t,
                    t1: sw,
                    v1,
                    v2,
                }) {
                    return false;
                }
                t = sw;
                continue;
            }
            if !f(&Segment {
                state: i,
                t0: t,
                t1: t + tau,
                v1,
                v2,
            }) {
                return false;
            }
            t += tau;
            i = layout.pick(rng.random::<f64>());
        } else {
            if !(bound > 0.0) || !(layout.total > 0.0) {
                // no point of the driving measure can move the chain before `sw`
                if !f(&Segment {
                    state: i,
                    t0: t,
                    t1: sw,
                    v1,
                    v2,
                }) {
                    return false;
                }
                t = sw;
                if t >= t_end {
                    return true;
                }
                continue;
            }
            let seg_start = t;
            let mut jumped = None;
            loop {
                let c = t + exp_draw(rng, bound);
                if c >= sw {
                    break;
                }
                t = c;
                let z = rng.random::<f64>() * bound;
                if let Some(j) = layout.locate(z) {
                    jumped = Some(j);
                    break;
                }
            }
            match jumped {
                Some(j) => {
                    if !f(&Segment {
                        state: i,
                        t0: seg_start,
                        t1: t,
                        v1,
                        v2,
                    }) {
                        return false;
                    }
                    i = j;
                }
                None => {
                    if !f(&Segment {
                        state: i,
                        t0: seg_start,
                        t1: sw,
                        v1,
                        v2,
                    }) {
                        return false;
                    }
                    t = sw;
                }
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub state: usize,
    pub t0: f64,
    pub t1: f64,
    pub v1: MixedAction,
    pub v2: MixedAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t_end: f64,
    /// `states[0]` is the start; `states[k + 1]` is entered at `jump_times[k]`.
    pub states: Vec<usize>,
    pub jump_times: Vec<f64>,
    /// Constant-action pieces; a sojourn splits where a Markov strategy switches.
    pub segments: Vec<SegmentRecord>,
    /// The last sojourn had zero exit rate and ran to `t_end`.
    pub absorbed: bool,
}

pub fn simulate_path(
    model: &GameModel,
    profile: &StrategyProfile,
    start: usize,
    t_end: f64,
    seed: u64,
    sampler: Sampler,
) -> Result<PathSample, LabError> {
    check_inputs(model, profile, start, t_end)?;
    let mut rng = path_rng(seed, 0);
    let mut out = PathSample {
        t_end,
        states: vec![start],
        jump_times: Vec::new(),
        segments: Vec::new(),
        absorbed: false,
    };
    out.absorbed = walk(model, profile, start, t_end, sampler, &mut rng, |s| {
        if s.state != *out.states.last().unwrap() {
            out.states.push(s.state);
            out.jump_times.push(s.t0);
        }
        out.segments.push(SegmentRecord {
            state: s.state,
            t0: s.t0,
            t1: s.t1,
            v1: s.v1.clone(),
            v2: s.v2.clone(),
        });
        true
    });
    Ok(out)
}

pub(crate) fn check_inputs(
    model: &GameModel,
    profile: &StrategyProfile,
    start: usize,
    t_end: f64,
) -> Result<(), LabError> {
    profile.check(model)?;
    if start >= model.states() {
        return Err(LabError::BadParameter(format!("start state {start} out of range")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(LabError::BadParameter(format!(
            "horizon must be finite and nonnegative, got {t_end}"
        )));
    }
    Ok(())
}

/// Runs `n` independent path functionals in parallel, returned in path order.
pub(crate) fn mc_samples(n: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> Vec<f64> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| f(&mut path_rng(seed, k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountedEstimate {
    pub estimate: McEstimate,
    /// `exp(theta e^{-alpha T} ||r|| / alpha)`: the neglected tail multiplies the
    /// true functional by at most this factor.
    pub tail_factor: f64,
}

/// Monte Carlo mean of `exp(theta int_0^T e^{-alpha s} r ds)` from `start`.
pub fn estimate_discounted(
    model: &GameModel,
    profile: &StrategyProfile,
    theta: f64,
    start: usize,
    t_end: f64,
    n_paths: usize,
    seed: u64,
    sampler: Sampler,
) -> Result<DiscountedEstimate, LabError> {
    check_inputs(model, profile, start, t_end)?;
    let alpha = model.alpha;
    let xs = mc_samples(n_paths, seed, |rng| {
        let mut integral = 0.0;
        walk(model, profile, start, t_end, sampler, rng, |s| {
            let r = bilinear_cost(model, s.state, s.v1, s.v2);
            integral += r * ((-alpha * s.t0).exp() - (-alpha * s.t1).exp()) / alpha;
            true
        });
        (theta * integral).exp()
    });
    Ok(DiscountedEstimate {
        estimate: McEstimate::from_samples(&xs),
        tail_factor: (theta * (-alpha * t_end).exp() * model.cost_sup() / alpha).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    /// `(1/T) ln E[exp(int_0^T r ds)]`.
    pub rho_hat: f64,
    /// Delta-method standard error of `rho_hat`.
    pub stderr: f64,
    pub moment: McEstimate,
}

/// Finite-horizon growth rate estimate under a stationary pair. The integrand
/// is an exponential functional, so its variance can grow like `e^{cT}`;
/// long horizons need many paths.
pub fn estimate_ergodic_growth(
    model: &GameModel,
    v1: &[MixedAction],
    v2: &[MixedAction],
    start: usize,
    t_end: f64,
    n_paths: usize,
    seed: u64,
) -> Result<GrowthEstimate, LabError> {
    let profile = StrategyProfile::stationary(v1.to_vec(), v2.to_vec());
    check_inputs(model, &profile, start, t_end)?;
    if !(t_end > 0.0) {
        return Err(LabError::BadParameter("growth estimate needs T > 0".into()));
    }
    let xs = mc_samples(n_paths, seed, |rng| {
        let mut integral = 0.0;
        walk(model, &profile, start, t_end, Sampler::Exact, rng, |s| {
            integral += bilinear_cost(model, s.state, s.v1, s.v2) * (s.t1 - s.t0);
            true
        });
        integral.exp()
    });
    let moment = McEstimate::from_samples(&xs);
    Ok(GrowthEstimate {
        rho_hat: moment.mean.ln() / t_end,
        stderr: moment.stderr / moment.mean / t_end,
        moment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::tests::random_model;
    use crate::model::Strategy;

    fn flip(lambda: f64) -> GameModel {
        let mut rate = vec![0.0; 16];
        for u in 0..4 {
            rate[u] = -lambda;
            rate[4 + u] = lambda;
            rate[8 + u] = lambda;
            rate[12 + u] = -lambda;
        }
        GameModel::new(2, 2, 2, rate, vec![0.2, 0.4, 0.6, 0.8, 0.1, 0.3, 0.5, 0.7], 1.0, 1.0, 0).unwrap()
    }

    fn uniform_profile(m: &GameModel) -> StrategyProfile {
        StrategyProfile::stationary(
            vec![MixedAction::uniform(m.actions1()); m.states()],
            vec![MixedAction::uniform(m.actions2()); m.states()],
        )
    }

    #[test]
    fn layout_packs_ascending() {
        let m = random_model(1, 4, 2, 2);
        let (a, b) = (MixedAction::uniform(2), MixedAction::pure(2, 1));
        let l = JumpLayout::new(&m, 2, &a, &b);
        assert_eq!(l.intervals.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 3]);
        assert!((l.intervals.last().unwrap().2 - l.total).abs() < 1e-10);
        for w in l.intervals.windows(2) {
            assert_eq!(w[0].2, w[1].1);
        }
        assert_eq!(l.locate(l.total + 1.0), None);
        assert_eq!(l.locate(0.0), Some(0));
    }

    #[test]
    fn one_state_single_sojourn() {
        let m = GameModel::new(1, 1, 1, vec![0.0], vec![0.5], 1.0, 1.0, 0).unwrap();
        let p = uniform_profile(&m);
        for sampler in [Sampler::Exact, Sampler::Literal] {
            let path = simulate_path(&m, &p, 0, 3.0, 7, sampler).unwrap();
            assert!(path.jump_times.is_empty());
            assert!(path.absorbed);
            assert_eq!((path.segments[0].t0, path.segments[0].t1), (0.0, 3.0));
        }
    }

    #[test]
    fn absorbing_state() {
        let rate = vec![-1.0, 1.0, 0.0, 0.0];
        let m = GameModel::new(2, 1, 1, rate, vec![0.0, 0.0], 1.0, 1.0, 0).unwrap();
        let p = uniform_profile(&m);
        let path = simulate_path(&m, &p, 1, 5.0, 1, Sampler::Exact).unwrap();
        assert!(path.absorbed);
        assert_eq!(path.states, vec![1]);
    }

    #[test]
    fn poisson_jump_count() {
        let m = flip(1.5);
        let p = uniform_profile(&m);
        for sampler in [Sampler::Exact, Sampler::Literal] {
            let counts = mc_samples(10_000, 3, |rng| {
                let mut jumps = 0usize;
                let mut last = 0;
                walk(&m, &p, 0, 2.0, sampler, rng, |s| {
                    if s.state != last {
                        jumps += 1;
                        last = s.state;
                    }
                    true
                });
                jumps as f64
            });
            let est = McEstimate::from_samples(&counts);
            assert!(est.agrees_with(3.0, 3.0), "{est:?}");
        }
    }

    #[test]
    fn deterministic_paths() {
        let m = random_model(2, 4, 2, 3);
        let p = uniform_profile(&m);
        let a = simulate_path(&m, &p, 0, 10.0, 99, Sampler::Exact).unwrap();
        let b = simulate_path(&m, &p, 0, 10.0, 99, Sampler::Exact).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&m, &p, 0, 10.0, 100, Sampler::Exact).unwrap();
        assert_ne!(a, c);
        for w in a.jump_times.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn sojourn_and_jump_laws() {
        let m = random_model(3, 3, 2, 2);
        let p = uniform_profile(&m);
        let (v1, v2) = p.at(0.0, 0);
        let layout = JumpLayout::new(&m, 0, v1, v2);
        for sampler in [Sampler::Exact, Sampler::Literal] {
            let firsts: Vec<(f64, usize)> = (0..10_000u64)
                .map(|k| {
                    let mut rng = path_rng(5, k);
                    let mut first = (f64::NAN, 0);
                    walk(&m, &p, 0, 1e9, sampler, &mut rng, |s| {
                        if s.state != 0 {
                            first.1 = s.state;
                            return false;
                        }
                        first.0 = s.t1;
                        true
                    });
                    first
                })
                .collect();
            let sojourn = McEstimate::from_samples(&firsts.iter().map(|x| x.0).collect::<Vec<_>>());
            assert!(sojourn.agrees_with(1.0 / layout.total, 3.0), "{sojourn:?}");
            for &(j, a, b) in &layout.intervals {
                let hits: Vec<f64> = firsts.iter().map(|x| (x.1 == j) as u8 as f64).collect();
                let est = McEstimate::from_samples(&hits);
                assert!(est.agrees_with((b - a) / layout.total, 3.0));
            }
        }
    }

    #[test]
    fn discounted_trivial_cases() {
        let m = random_model(4, 3, 2, 2);
        let p = uniform_profile(&m);
        let z = estimate_discounted(&m.with_cost_scale(0.0), &p, 0.7, 0, 5.0, 100, 1, Sampler::Exact).unwrap();
        assert_eq!((z.estimate.mean, z.estimate.stderr), (1.0, 0.0));
        let mut c = m.with_cost_scale(0.0);
        for i in 0..3 {
            for u in 0..4 {
                c.set_cost(i, u / 2, u % 2, 0.6);
            }
        }
        let e = estimate_discounted(&c, &p, 0.7, 0, 5.0, 100, 1, Sampler::Exact).unwrap();
        let exact = (0.7 * 0.6 * (1.0 - (-5.0_f64).exp())).exp();
        assert!((e.estimate.mean - exact).abs() < 1e-12);
        assert!(e.estimate.stderr < 1e-12);
        assert!((e.tail_factor - (0.7 * (-5.0_f64).exp() * 0.6).exp()).abs() < 1e-15);
    }

    #[test]
    fn markov_profile_switches_actions() {
        let m = GameModel::new(1, 2, 1, vec![0.0, 0.0], vec![1.0, 3.0], 1.0, 1.0, 0).unwrap();
        let profile = StrategyProfile {
            player1: Strategy::Markov {
                dt: 0.5,
                table: vec![vec![MixedAction::pure(2, 0)], vec![MixedAction::pure(2, 1)]],
            },
            player2: Strategy::stationary(vec![MixedAction::pure(1, 0)]),
        };
        let e = estimate_discounted(&m, &profile, 1.0, 0, 2.0, 10, 0, Sampler::Exact).unwrap();
        let integral = (1.0 - (-0.5_f64).exp()) + 3.0 * ((-0.5_f64).exp() - (-2.0_f64).exp());
        assert!((e.estimate.mean - integral.exp()).abs() < 1e-12);
    }

    #[test]
    fn growth_trivial_cases() {
        let m = random_model(6, 3, 2, 2);
        let v1 = vec![MixedAction::uniform(2); 3];
        let v2 = vec![MixedAction::uniform(2); 3];
        let g = estimate_ergodic_growth(&m.with_cost_scale(0.0), &v1, &v2, 0, 5.0, 50, 0).unwrap();
        assert_eq!(g.rho_hat, 0.0);
        let mut c = m.with_cost_scale(0.0);
        for i in 0..3 {
            for u in 0..4 {
                c.set_cost(i, u / 2, u % 2, 0.25);
            }
        }
        let g = estimate_ergodic_growth(&c, &v1, &v2, 0, 5.0, 50, 0).unwrap();
        assert!((g.rho_hat - 0.25).abs() < 1e-12);
    }
}
