//! Composite Simpson quadrature on uniform grids.

/// Running integral `I[k] = int_{x_0}^{x_k} f` for samples `f` on a uniform
/// grid of spacing `h` with an even number of panels. Even nodes use Simpson
/// panels; odd nodes add a four-point rule over the first half panel, exact
/// for cubics like Simpson itself (three points when the grid has only three).
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 3 && n % 2 == 1, "need an even number of panels");
    let mut out = vec![0.0; n];
    let mut k = 0;
    while k + 2 < n {
        let half = if k + 3 < n {
            h / 24.0 * (9.0 * f[k] + 19.0 * f[k + 1] - 5.0 * f[k + 2] + f[k + 3])
        } else if k >= 1 {
            h / 24.0 * (-f[k - 1] + 13.0 * f[k] + 13.0 * f[k + 1] - f[k + 2])
        } else {
            h / 12.0 * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2])
        };
        out[k + 1] = out[k] + half;
        out[k + 2] = out[k] + h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
        k += 2;
    }
    out
}

/// Composite Simpson over the whole grid.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    *cumulative_simpson(f, h).last().unwrap()
}

/// Richardson estimate `|S_h - S_2h| / 15` of the composite Simpson error.
/// Needs a panel count divisible by four.
pub fn simpson_error_estimate(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    assert!((n - 1).is_multiple_of(4), "panel count must be divisible by four");
    let coarse: Vec<f64> = f.iter().step_by(2).copied().collect();
    (simpson(f, h) - simpson(&coarse, 2.0 * h)).abs() / 15.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_cubics() {
        let h = 0.1;
        let xs: Vec<f64> = (0..=8).map(|k| 1.0 + k as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x).collect();
        let cum = cumulative_simpson(&f, h);
        for (k, x) in xs.iter().enumerate() {
            let exact = (x.powi(4) / 4.0 - x * x) - (0.25 - 1.0);
            assert!((cum[k] - exact).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn error_estimate_tracks_true_error() {
        let h = 0.05;
        let f: Vec<f64> = (0..=16).map(|k| (k as f64 * h).exp()).collect();
        let exact = (16.0 * h).exp() - 1.0;
        let err = (simpson(&f, h) - exact).abs();
        let est = simpson_error_estimate(&f, h);
        assert!(est > 0.5 * err && est < 2.0 * err);
    }
}
