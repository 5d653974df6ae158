//! Dense helpers for small nonnegative and Metzler matrices.

use nalgebra::{DMatrix, DVector};

/// Perron root of a nonnegative matrix, its positive eigenvector (scaled to
/// max 1) and the final Collatz-Wielandt bracket `[lo, hi]` on the root.
#[derive(Debug, Clone)]
pub struct PerronPair {
    pub root: f64,
    pub vector: DVector<f64>,
    pub lo: f64,
    pub hi: f64,
}

/// Power iteration on `B + I` (always aperiodic), repeatedly squaring the
/// iteration matrix when convergence is slow. The bracket
/// `min_i (Bx)_i / x_i <= rho(B) <= max_i (Bx)_i / x_i` holds for every
/// positive `x`, so `hi` is a valid upper bound even when the iteration stalls.
pub fn perron_root(b: &DMatrix<f64>, rel_tol: f64) -> Result<PerronPair, PerronPair> {
    let n = b.nrows();
    let shifted = b + DMatrix::identity(n, n);
    let mut iter_mat = shifted.clone();
    let mut x = DVector::from_element(n, 1.0);
    let mut best = None;
    for _round in 0..40 {
        for _ in 0..64 {
            let y = &iter_mat * &x;
            let m = y.max();
            if !(m > 0.0) || !m.is_finite() {
                break;
            }
            x = y / m;
        }
        let bx = &shifted * &x;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            if x[i] > 0.0 {
                let r = bx[i] / x[i];
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        let pair = PerronPair {
            root: 0.5 * (lo + hi) - 1.0,
            vector: x.clone(),
            lo: lo - 1.0,
            hi: hi - 1.0,
        };
        if hi - lo <= rel_tol * hi.abs().max(1.0) {
            return Ok(pair);
        }
        best = Some(pair);
        let sq = &iter_mat * &iter_mat;
        let scale = sq.max();
        iter_mat = if scale > 0.0 && scale.is_finite() {
            sq / scale
        } else {
            sq
        };
    }
    Err(best.expect("at least one round ran"))
}

/// Spectral abscissa (largest real eigenvalue) of a Metzler matrix, through
/// the Perron root of `A + cI` with `c = max |a_ii|`.
pub fn metzler_abscissa(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let c = (0..n).fold(0.0_f64, |acc, i| acc.max(a[(i, i)].abs()));
    let shifted = a + DMatrix::identity(n, n) * c;
    match perron_root(&shifted, 1e-13) {
        Ok(p) => p.root - c,
        Err(p) => p.hi - c,
    }
}

/// Strong connectivity of the directed graph with an edge `i -> j` whenever
/// `a[(i, j)] > 0`, `i != j`.
pub fn is_irreducible(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { a[(i, j)] } else { a[(j, i)] };
                if j != i && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Solves `a x = b` by LU; `None` when `a` is numerically singular.
pub fn solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.lu().solve(b).filter(|x| x.iter().all(|v| v.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perron_of_known_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = perron_root(&a, 1e-14).unwrap();
        assert!((p.root - 1.0).abs() < 1e-13);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let p = perron_root(&a, 1e-14).unwrap();
        assert!((p.root - 3.0).abs() < 1e-12);
        assert!((p.vector[0] - p.vector[1]).abs() < 1e-12);
    }

    #[test]
    fn slow_gap_is_accelerated() {
        // second eigenvalue 1 - 1e-6 relative to the first
        let eps = 1e-6;
        let a = DMatrix::from_row_slice(2, 2, &[1.0 - eps, eps, eps, 1.0 - eps]);
        let p = perron_root(&a, 1e-14).unwrap();
        assert!((p.root - 1.0).abs() < 1e-12);
    }

    #[test]
    fn abscissa_of_generator_is_zero() {
        let q = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 0.5, -0.5, 0.0, 3.0, 0.0, -3.0]);
        assert!(metzler_abscissa(&q).abs() < 1e-12);
        assert!(is_irreducible(&q));
        let r = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        assert!(!is_irreducible(&r));
    }
}
