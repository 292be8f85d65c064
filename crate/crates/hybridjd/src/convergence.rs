//! Slope estimation for convergence tables
//!
//! Given resolutions `s_j` (time step, grid spacing) and errors `e_j`, the
//! empirical order is the least-squares slope of `ln e` against `ln s`.
//! Two guards keep the fit honest:
//!
//! * errors at or below a floor are dropped (they measure roundoff, not the
//!   discretization), and the fit reports `None` when fewer than two points
//!   survive;
//! * when at least four points remain, the slope of the finer points
//!   predicts the coarsest error ratio; if the observed ratio departs from
//!   the prediction by more than 50% the coarsest point is treated as
//!   pre-asymptotic and excluded.

/// Outcome of a log-log slope fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Fitted order; `None` when fewer than two usable points remain.
    pub slope: Option<f64>,
    /// The coarsest point was dropped as pre-asymptotic.
    pub excluded_coarsest: bool,
    /// At least one error sat at or below the floor.
    pub floored: bool,
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mut x_mean = 0.0;
    let mut y_mean = 0.0;
    for &(s, e) in points {
        x_mean += s.ln();
        y_mean += e.ln();
    }
    x_mean /= n;
    y_mean /= n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(s, e) in points {
        let dx = s.ln() - x_mean;
        num += dx * (e.ln() - y_mean);
        den += dx * (s.ln() - x_mean);
    }
    num / den
}

/// Fits `ln e` against `ln s`; see the module documentation.
///
/// `steps` and `errors` must have equal length; the order of the pairs does
/// not matter.
pub fn fit_loglog(steps: &[f64], errors: &[f64], floor: f64) -> SlopeFit {
    assert_eq!(steps.len(), errors.len());
    let mut floored = false;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(steps.len());
    for (&s, &e) in steps.iter().zip(errors.iter()) {
        if !s.is_finite() || s <= 0.0 || !e.is_finite() {
            continue;
        }
        if e <= floor {
            floored = true;
            continue;
        }
        points.push((s, e));
    }
    // Coarsest first.
    points.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    points.dedup_by(|a, b| a.0 == b.0);

    if points.len() < 2 {
        return SlopeFit {
            slope: None,
            excluded_coarsest: false,
            floored,
        };
    }

    let mut excluded_coarsest = false;
    if points.len() >= 4 {
        let fine_slope = least_squares_slope(&points[1..]);
        let predicted = (points[0].0 / points[1].0).powf(fine_slope);
        let observed = points[0].1 / points[1].1;
        if (observed / predicted - 1.0).abs() > 0.5 {
            excluded_coarsest = true;
            points.remove(0);
        }
    }

    SlopeFit {
        slope: Some(least_squares_slope(&points)),
        excluded_coarsest,
        floored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_clean_power_law() {
        let steps = [0.08f64, 0.04, 0.02, 0.01];
        let errors: Vec<f64> = steps.iter().map(|h| 3.0 * h.powf(1.5)).collect();
        let fit = fit_loglog(&steps, &errors, 1e-10);
        assert!((fit.slope.unwrap() - 1.5).abs() < 1e-12);
        assert!(!fit.excluded_coarsest);
        assert!(!fit.floored);
    }

    #[test]
    fn excludes_a_preasymptotic_coarsest_point() {
        let steps = [8.0, 4.0, 2.0, 1.0];
        let errors = [10.0, 2.0, 1.0, 0.5];
        let fit = fit_loglog(&steps, &errors, 1e-10);
        assert!(fit.excluded_coarsest);
        assert!((fit.slope.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn keeps_a_consistent_coarsest_point() {
        let steps = [8.0, 4.0, 2.0, 1.0];
        let errors: Vec<f64> = steps.iter().map(|h| 2.0 * h).collect();
        let fit = fit_loglog(&steps, &errors, 1e-10);
        assert!(!fit.excluded_coarsest);
        assert!((fit.slope.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_floored_errors() {
        let steps = [0.04, 0.02, 0.01];
        let errors = [3e-11, 1e-11, 8e-12];
        let fit = fit_loglog(&steps, &errors, 1e-10);
        assert_eq!(fit.slope, None);
        assert!(fit.floored);

        let errors = [1e-3, 4e-11, 2e-11];
        let fit = fit_loglog(&steps, &errors, 1e-10);
        assert_eq!(fit.slope, None);
        assert!(fit.floored);
    }

    #[test]
    fn needs_two_points() {
        let fit = fit_loglog(&[0.1], &[1e-3], 1e-10);
        assert_eq!(fit.slope, None);
        assert!(!fit.floored);
    }
}
