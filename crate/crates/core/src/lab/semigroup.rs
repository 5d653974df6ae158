//! Feynman-Kac semigroup `K(t) = exp(t (Pi_v + diag r_v))` and first-passage
//! exponential moments for stationary pairs.

use super::LabError;
use crate::linalg::{metzler_abscissa, solve};
use crate::model::{GameModel, MixedAction};
use nalgebra::{DMatrix, DVector};

/// Largest `Lambda t` handled by one uniformization series; longer times are
/// split into equal pieces and composed.
const MAX_SERIES_MASS: f64 = 30.0;

fn uniformized(a: &DMatrix<f64>, lam: f64, t: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let p = DMatrix::identity(n, n) + a / lam;
    let growth = p
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mass = lam * t;
    let mut term = DMatrix::identity(n, n) * (-mass).exp();
    let mut sum = term.clone();
    for k in 1..10_000usize {
        term = &term * &p * (mass / k as f64);
        sum += &term;
        let ratio = mass * growth / (k + 1) as f64;
        // remaining terms are dominated by a geometric series with this ratio
        if ratio < 0.5 && term.amax() * ratio / (1.0 - ratio) <= 1e-17 * sum.amax() {
            return sum.iter().all(|x| x.is_finite()).then_some(sum);
        }
    }
    None
}

/// `K(t)[i][j] = E_i[exp(int_0^t r ds); Y(t) = j]` under a stationary pair.
pub fn feynman_kac(
    model: &GameModel,
    v1: &[MixedAction],
    v2: &[MixedAction],
    t: f64,
) -> Result<DMatrix<f64>, LabError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(LabError::BadParameter(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    let a = model.cost_generator(v1, v2);
    semigroup(&a, model.uniformization_rate(), t)
}

pub(crate) fn semigroup(a: &DMatrix<f64>, lam: f64, t: f64) -> Result<DMatrix<f64>, LabError> {
    let n = a.nrows();
    if t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let pieces = (lam * t / MAX_SERIES_MASS).ceil().max(1.0) as u32;
    let step = uniformized(a, lam, t / pieces as f64).ok_or(LabError::SeriesTruncationOverflow)?;
    let mut out = step.clone();
    for _ in 1..pieces {
        out = &out * &step;
    }
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(LabError::SeriesTruncationOverflow)
    }
}

/// `u(i) = E_i[exp(delta tau)]`, `tau` the hitting time of `target`, from
/// `(Q u)(i) + delta u(i) = 0` off the target and `u(target) = 1`.
pub fn exp_hitting_moment(
    model: &GameModel,
    v1: &[MixedAction],
    v2: &[MixedAction],
    target: usize,
    delta: f64,
) -> Result<Vec<f64>, LabError> {
    let n = model.states();
    if target >= n {
        return Err(LabError::BadParameter(format!("target {target} out of range")));
    }
    let q = model.generator(v1, v2);
    let rest: Vec<usize> = (0..n).filter(|&i| i != target).collect();
    let mut u = vec![1.0; n];
    if rest.is_empty() {
        return Ok(u);
    }
    let k = rest.len();
    let sub = DMatrix::from_fn(k, k, |a, b| q[(rest[a], rest[b])] + if a == b { delta } else { 0.0 });
    let abscissa = metzler_abscissa(&sub);
    if abscissa >= -1e-12 {
        return Err(LabError::MomentInfinite { abscissa });
    }
    let rhs = DVector::from_fn(k, |a, _| -q[(rest[a], target)]);
    let x = solve(sub, &rhs).ok_or(LabError::MomentInfinite { abscissa })?;
    for (a, &i) in rest.iter().enumerate() {
        if !(x[a] > 0.0) {
            return Err(LabError::MomentInfinite { abscissa });
        }
        u[i] = x[a];
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::tests::random_model;

    fn pair(m: &GameModel) -> (Vec<MixedAction>, Vec<MixedAction>) {
        (
            vec![MixedAction::uniform(m.actions1()); m.states()],
            vec![MixedAction::pure(m.actions2(), 0); m.states()],
        )
    }

    #[test]
    fn identity_at_zero_and_stochastic_without_cost() {
        let m = random_model(1, 4, 2, 2);
        let (v1, v2) = pair(&m);
        assert_eq!(feynman_kac(&m, &v1, &v2, 0.0).unwrap(), DMatrix::identity(4, 4));
        let k = feynman_kac(&m.with_cost_scale(0.0), &v1, &v2, 3.7).unwrap();
        for i in 0..4 {
            assert!((k.row(i).sum() - 1.0).abs() < 1e-12);
            assert!(k.row(i).iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn one_state_exponential() {
        let m = GameModel::new(1, 1, 1, vec![0.0], vec![0.3], 1.0, 1.0, 0).unwrap();
        let v = vec![MixedAction::pure(1, 0)];
        let k = feynman_kac(&m, &v, &v, 50.0).unwrap();
        assert!((k[(0, 0)] / (15.0_f64).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn semigroup_property_and_growth() {
        let m = random_model(2, 4, 2, 2);
        let (v1, v2) = pair(&m);
        let (s, t) = (0.7, 2.9);
        let ks = feynman_kac(&m, &v1, &v2, s).unwrap();
        let kt = feynman_kac(&m, &v1, &v2, t).unwrap();
        let kst = feynman_kac(&m, &v1, &v2, s + t).unwrap();
        let diff = (&ks * &kt - &kst).amax();
        assert!(diff <= 1e-9 * kst.amax(), "{diff}");
        for i in 0..4 {
            assert!(kt.row(i).sum() >= 1.0);
        }
    }

    #[test]
    fn hitting_moment_trivial_cases() {
        let m = random_model(3, 3, 2, 2);
        let (v1, v2) = pair(&m);
        let u = exp_hitting_moment(&m, &v1, &v2, 1, 0.0).unwrap();
        assert!(u.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let u = exp_hitting_moment(&m, &v1, &v2, 1, 0.3).unwrap();
        assert_eq!(u[1], 1.0);
        assert!(u.iter().all(|&x| x >= 1.0));
        assert!(matches!(
            exp_hitting_moment(&m, &v1, &v2, 1, 100.0),
            Err(LabError::MomentInfinite { .. })
        ));
    }

    #[test]
    fn two_state_hitting_closed_form() {
        // from state 1 the hitting time of 0 is Exp(mu): E[e^{delta tau}] = mu / (mu - delta)
        let mu = 4.0;
        let rate = vec![-1.0, 1.0, mu, -mu];
        let m = GameModel::new(2, 1, 1, rate, vec![0.0, 0.0], 1.0, 1.0, 0).unwrap();
        let v = vec![MixedAction::pure(1, 0); 2];
        let u = exp_hitting_moment(&m, &v, &v, 0, 1.0).unwrap();
        assert!((u[1] - mu / (mu - 1.0)).abs() < 1e-12);
        assert!(u[1] <= 2.0);
    }
}
