//! Two-person zero-sum matrix games. The row player minimizes `p^T A q`,
//! the column player maximizes it.
//!
//! Games are solved as a linear program with a dense simplex tableau
//! (Bland's rule). After rescaling `A` into `[1, 2]` the row player's program
//! `max 1^T x  s.t.  A^T x <= 1, x >= 0` is feasible at the slack basis, and
//! the column player's optimal strategy is read off the duals of that program.
//! Optimal strategies need not be unique; the returned pair is the basic
//! optimal solution the pivoting lands on.

use crate::model::MixedAction;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("payoff matrix has a non-finite entry at ({0}, {1})")]
    NonFiniteEntry(usize, usize),
    #[error("payoff matrix must be at least 1x1 and rectangular")]
    BadShape,
    #[error("simplex did not terminate within {0} pivots")]
    PivotLimit(usize),
}

/// Dense `rows x cols` payoff matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    payoff: Vec<f64>,
}

impl MatrixGame {
    pub fn new(rows: usize, cols: usize, payoff: Vec<f64>) -> Result<Self, GameError> {
        if rows == 0 || cols == 0 || payoff.len() != rows * cols {
            return Err(GameError::BadShape);
        }
        if let Some(k) = payoff.iter().position(|x| !x.is_finite()) {
            return Err(GameError::NonFiniteEntry(k / cols, k % cols));
        }
        Ok(Self { rows, cols, payoff })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GameError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GameError::BadShape);
        }
        Self::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.payoff[i * self.cols + j]
    }

    pub fn payoff(&self) -> &[f64] {
        &self.payoff
    }

    /// `-A^T`: the same game seen from the column player, who then minimizes.
    pub fn negated_transpose(&self) -> Self {
        let mut out = vec![0.0; self.payoff.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = -self.get(i, j);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            payoff: out,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            payoff: self.payoff.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `p^T A q`.
    pub fn expected(&self, p: &[f64], q: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            if p[i] == 0.0 {
                continue;
            }
            let row = &self.payoff[i * self.cols..(i + 1) * self.cols];
            acc += p[i] * row.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    /// Column payoffs `p^T A e_j`.
    pub fn column_payoffs(&self, p: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| p[i] * self.get(i, j)).sum())
            .collect()
    }

    /// Row payoffs `e_i^T A q`.
    pub fn row_payoffs(&self, q: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * q[j]).sum())
            .collect()
    }

    fn min_max(&self) -> (f64, f64) {
        self.payoff
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    pub value: f64,
    /// Row (minimizing) player's optimal mixed strategy.
    pub p_star: MixedAction,
    /// Column (maximizing) player's optimal mixed strategy.
    pub q_star: MixedAction,
}

impl GameSolution {
    /// Largest violation of `p*^T A e_j <= value <= e_i^T A q*` over pure `i`, `j`.
    pub fn saddle_residual(&self, game: &MatrixGame) -> f64 {
        let cols = game.column_payoffs(self.p_star.weights());
        let rows = game.row_payoffs(self.q_star.weights());
        let over = cols.iter().fold(f64::NEG_INFINITY, |a, &c| a.max(c - self.value));
        let under = rows.iter().fold(f64::NEG_INFINITY, |a, &r| a.max(self.value - r));
        over.max(under).max(0.0)
    }
}

const PIVOT_EPS: f64 = 1e-12;

/// Solves the game exactly by linear programming.
pub fn solve_matrix_game(game: &MatrixGame) -> Result<GameSolution, GameError> {
    let (m1, m2) = (game.rows, game.cols);
    if m1 == 1 {
        // the only row is played; the maximizer picks the best column
        let (j, v) = argmax((0..m2).map(|j| game.get(0, j)));
        return Ok(GameSolution {
            value: v,
            p_star: MixedAction::pure(1, 0),
            q_star: MixedAction::pure(m2, j),
        });
    }
    if m2 == 1 {
        let (i, v) = argmax((0..m1).map(|i| -game.get(i, 0)));
        return Ok(GameSolution {
            value: -v,
            p_star: MixedAction::pure(m1, i),
            q_star: MixedAction::pure(1, 0),
        });
    }

    let (lo, hi) = game.min_max();
    let scale = if hi > lo { hi - lo } else { 1.0 };
    if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()) {
        // constant matrix: every strategy is optimal
        return Ok(GameSolution {
            value: game.get(0, 0),
            p_star: MixedAction::uniform(m1),
            q_star: MixedAction::uniform(m2),
        });
    }

    // Tableau: m2 constraint rows (one per column j) over m1 structural + m2 slack
    // variables, then the rhs. Row m2 is the objective row (reduced costs).
    let width = m1 + m2 + 1;
    let mut tab = vec![0.0; (m2 + 1) * width];
    for j in 0..m2 {
        let row = &mut tab[j * width..(j + 1) * width];
        for i in 0..m1 {
            row[i] = (game.get(i, j) - lo) / scale + 1.0;
        }
        row[m1 + j] = 1.0;
        row[width - 1] = 1.0;
    }
    {
        let obj = &mut tab[m2 * width..];
        for x in obj.iter_mut().take(m1) {
            *x = -1.0;
        }
    }
    let mut basis: Vec<usize> = (m1..m1 + m2).collect();

    let max_pivots = 50 * (m1 + m2) * (m1 + m2);
    let mut pivots = 0;
    loop {
        // Bland: lowest-index column with a negative reduced cost
        let obj = &tab[m2 * width..];
        let Some(enter) = (0..m1 + m2).find(|&c| obj[c] < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m2 {
            let a = tab[r * width + enter];
            if a > PIVOT_EPS {
                let ratio = tab[r * width + width - 1] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - PIVOT_EPS || (ratio <= lratio + PIVOT_EPS && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        // bounded: every column of the scaled matrix is positive
        let (lr, _) = leave.expect("zero-sum LP is bounded");
        pivot(&mut tab, width, m2 + 1, lr, enter);
        basis[lr] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return Err(GameError::PivotLimit(max_pivots));
        }
    }

    let mut x = vec![0.0; m1];
    for (r, &b) in basis.iter().enumerate() {
        if b < m1 {
            x[b] = tab[r * width + width - 1];
        }
    }
    let obj = &tab[m2 * width..];
    let y: Vec<f64> = (0..m2).map(|j| obj[m1 + j].max(0.0)).collect();
    let z = obj[width - 1];
    let scaled_value = 1.0 / z;
    Ok(GameSolution {
        value: (scaled_value - 1.0) * scale + lo,
        p_star: MixedAction::normalized(x),
        q_star: MixedAction::normalized(y),
    })
}

fn pivot(tab: &mut [f64], width: usize, nrows: usize, pr: usize, pc: usize) {
    let p = tab[pr * width + pc];
    for c in 0..width {
        tab[pr * width + c] /= p;
    }
    tab[pr * width + pc] = 1.0;
    let prow: Vec<f64> = tab[pr * width..(pr + 1) * width].to_vec();
    for r in 0..nrows {
        if r == pr {
            continue;
        }
        let f = tab[r * width + pc];
        if f != 0.0 {
            let row = &mut tab[r * width..(r + 1) * width];
            for (a, b) in row.iter_mut().zip(&prow) {
                *a -= f * b;
            }
            row[pc] = 0.0;
        }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) },
    )
}

/// Grid search over the row player's simplex with `grid_k` subdivisions per
/// edge, against exact pure best responses. Test oracle only; it approaches
/// the game value from above as the grid refines.
pub fn brute_force_value(game: &MatrixGame, grid_k: usize) -> f64 {
    let k = grid_k.max(1);
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; game.rows];
    let mut p = vec![0.0; game.rows];
    enumerate_compositions(&mut counts, 0, k, &mut |c| {
        for (pi, &ci) in p.iter_mut().zip(c) {
            *pi = ci as f64 / k as f64;
        }
        let worst = game.column_payoffs(&p).into_iter().fold(f64::NEG_INFINITY, f64::max);
        best = best.min(worst);
    });
    best
}

/// Equilibrium by support enumeration over square sub-matrices: for every
/// pair of equal-size supports the indifference equations are solved and the
/// candidate is accepted once it is a saddle point of the full game within
/// `tol`. A square kernel always exists, so the search succeeds on every game;
/// the cost is exponential in the size. Test oracle only.
pub fn support_enumeration(game: &MatrixGame, tol: f64) -> Option<GameSolution> {
    let k_max = game.rows.min(game.cols);
    for k in 1..=k_max {
        for rows in subsets(game.rows, k) {
            for cols in subsets(game.cols, k) {
                if let Some(sol) = square_candidate(game, &rows, &cols, tol) {
                    return Some(sol);
                }
            }
        }
    }
    None
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn square_candidate(game: &MatrixGame, rows: &[usize], cols: &[usize], tol: f64) -> Option<GameSolution> {
    use nalgebra::{DMatrix, DVector};
    let k = rows.len();
    // unknowns (x_1..x_k, v): sum_a x_a B[a][b] - v = 0 for each b, sum x = 1
    let indifference = |b: &dyn Fn(usize, usize) -> f64| -> Option<Vec<f64>> {
        let mut m = DMatrix::zeros(k + 1, k + 1);
        for eq in 0..k {
            for a in 0..k {
                m[(eq, a)] = b(a, eq);
            }
            m[(eq, k)] = -1.0;
        }
        for a in 0..k {
            m[(k, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(k + 1);
        rhs[k] = 1.0;
        crate::linalg::solve(m, &rhs).map(|x| x.iter().copied().collect())
    };
    let px = indifference(&|a, b| game.get(rows[a], cols[b]))?;
    let qx = indifference(&|a, b| game.get(rows[b], cols[a]))?;
    if px[..k].iter().chain(&qx[..k]).any(|&w| w < -tol) {
        return None;
    }
    let mut p = vec![0.0; game.rows];
    let mut q = vec![0.0; game.cols];
    for a in 0..k {
        p[rows[a]] = px[a].max(0.0);
        q[cols[a]] = qx[a].max(0.0);
    }
    let sol = GameSolution {
        value: px[k],
        p_star: MixedAction::normalized(p),
        q_star: MixedAction::normalized(q),
    };
    (sol.saddle_residual(game) <= tol).then_some(sol)
}

fn enumerate_compositions(counts: &mut [usize], pos: usize, remaining: usize, f: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        enumerate_compositions(counts, pos + 1, remaining - c, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn game(rows: &[&[f64]]) -> MatrixGame {
        MatrixGame::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_game(rng: &mut ChaCha8Rng, m1: usize, m2: usize) -> MatrixGame {
        MatrixGame::new(m1, m2, (0..m1 * m2).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn one_by_one() {
        let s = solve_matrix_game(&game(&[&[2.5]])).unwrap();
        assert_eq!(s.value, 2.5);
        assert_eq!(s.p_star.weights(), &[1.0]);
        assert_eq!(s.q_star.weights(), &[1.0]);
    }

    #[test]
    fn matching_pennies() {
        let g = game(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let s = solve_matrix_game(&g).unwrap();
        assert!(s.value.abs() < 1e-12);
        for w in s.p_star.weights().iter().chain(s.q_star.weights()) {
            assert!((w - 0.5).abs() < 1e-12);
        }
        assert!(brute_force_value(&g, 100).abs() <= 2.0 / 100.0);
    }

    #[test]
    fn equalizer_example() {
        // rows equalize at 3 - 3p = 1 + p, so p = 1/2 and the value is 3/2
        let g = game(&[&[0.0, 2.0], &[3.0, 1.0]]);
        let s = solve_matrix_game(&g).unwrap();
        assert!((s.value - 1.5).abs() < 1e-12);
        assert!((s.p_star.weights()[0] - 0.5).abs() < 1e-12);
        assert!(s.saddle_residual(&g) < 1e-12);
        assert!((brute_force_value(&g, 200) - 1.5).abs() <= 0.02);
    }

    #[test]
    fn degenerate_shapes() {
        let row = game(&[&[1.0, 4.0, 2.0]]);
        let s = solve_matrix_game(&row).unwrap();
        assert_eq!((s.value, s.q_star.weights()[1]), (4.0, 1.0));
        let col = game(&[&[1.0], &[-4.0], &[2.0]]);
        let s = solve_matrix_game(&col).unwrap();
        assert_eq!((s.value, s.p_star.weights()[1]), (-4.0, 1.0));
        assert_eq!(brute_force_value(&game(&[&[3.0]]), 7), 3.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            MatrixGame::new(2, 2, vec![0.0, 1.0, f64::NAN, 0.0]),
            Err(GameError::NonFiniteEntry(1, 0))
        );
    }

    #[test]
    fn dominated_and_constant_games() {
        let g = game(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let s = solve_matrix_game(&g).unwrap();
        assert_eq!(s.value, 1.0);
        // row 0 dominates for the minimizer, column 1 for the maximizer
        let g = game(&[&[0.0, 1.0, 0.5], &[2.0, 3.0, 2.5], &[1.0, 4.0, 0.0]]);
        let s = solve_matrix_game(&g).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!(s.saddle_residual(&g) < 1e-12);
    }

    #[test]
    fn duality_gap_on_random_games() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (m1, m2) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let g = random_game(&mut rng, m1, m2);
            let minmax = solve_matrix_game(&g).unwrap();
            let maxmin = -solve_matrix_game(&g.negated_transpose()).unwrap().value;
            assert!((minmax.value - maxmin).abs() <= 1e-9, "{g:?}");
            assert!(minmax.saddle_residual(&g) <= 1e-9);
        }
    }

    #[test]
    fn brute_force_agrees_on_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 60;
        for _ in 0..100 {
            let g = random_game(&mut rng, 3, 3);
            let v = solve_matrix_game(&g).unwrap().value;
            let b = brute_force_value(&g, k);
            assert!(b >= v - 1e-12);
            assert!((v - b).abs() <= 3.0 / k as f64);
        }
    }

    proptest! {
        #[test]
        fn shift_and_scale_equivariance(
            entries in proptest::collection::vec(-5.0f64..5.0, 12),
            c in -10.0f64..10.0,
            lambda in 0.01f64..20.0,
        ) {
            let g = MatrixGame::new(3, 4, entries).unwrap();
            let s = solve_matrix_game(&g).unwrap();
            let shifted = g.map(|x| x + c);
            let ss = solve_matrix_game(&shifted).unwrap();
            prop_assert!((ss.value - (s.value + c)).abs() < 1e-9);
            prop_assert!(ss.saddle_residual(&shifted) < 1e-9);
            // the original optimal pair stays optimal after the shift
            let moved = GameSolution { value: s.value + c, ..s.clone() };
            prop_assert!(moved.saddle_residual(&shifted) < 1e-9);
            let scaled = g.map(|x| lambda * x);
            let sc = solve_matrix_game(&scaled).unwrap();
            prop_assert!((sc.value - lambda * s.value).abs() < 1e-9 * (1.0 + lambda));
        }
    }

    #[test]
    fn support_enumeration_agrees_on_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let a: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = MatrixGame::new(3, 3, a).unwrap();
            let lp = solve_matrix_game(&g).unwrap();
            let se = support_enumeration(&g, 1e-9).unwrap();
            assert!((lp.value - se.value).abs() < 1e-9, "{} vs {}", lp.value, se.value);
        }
    }

    #[test]
    fn support_enumeration_handles_degenerate_games() {
        let g = MatrixGame::new(3, 3, vec![1.0; 9]).unwrap();
        assert_eq!(support_enumeration(&g, 1e-12).unwrap().value, 1.0);
        let g = MatrixGame::new(3, 3, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((support_enumeration(&g, 1e-12).unwrap().value - 2.0 / 3.0).abs() < 1e-12);
    }
}
