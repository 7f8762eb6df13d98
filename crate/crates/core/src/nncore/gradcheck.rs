//! Finite-difference gradient verification.

use super::NnError;

pub const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central differences `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64]) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Central differences of the scalar `Σ_k w_k · y_k(x)` for a vector-valued
/// `y`, differencing each output before contracting with `w`. This avoids
/// the cancellation error of subtracting two large scalar sums.
pub fn central_difference_weighted<F: FnMut(&[f64]) -> Vec<f64>>(mut f: F, point: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            let diff: f64 = up.iter().zip(&down).zip(weights).map(|((u, d), w)| w * (u - d)).sum();
            diff / (2.0 * FD_STEP)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `f` at `point`.
///
/// Fails with [`NnError::GradCheck`] naming the first coordinate whose
/// relative error exceeds `tolerance`.
pub fn grad_check<F: FnMut(&[f64]) -> f64>(
    f: F,
    point: &[f64],
    analytic: &[f64],
    tolerance: f64,
) -> Result<GradCheckReport, NnError> {
    if point.len() != analytic.len() {
        return Err(NnError::Shape(format!(
            "grad_check: {} coordinates but {} analytic gradients",
            point.len(),
            analytic.len()
        )));
    }
    compare(analytic, &central_difference(f, point), tolerance)
}

/// [`grad_check`] for `f(x) = Σ_k w_k · y_k(x)`; see
/// [`central_difference_weighted`].
pub fn grad_check_weighted<F: FnMut(&[f64]) -> Vec<f64>>(
    f: F,
    weights: &[f64],
    point: &[f64],
    analytic: &[f64],
    tolerance: f64,
) -> Result<GradCheckReport, NnError> {
    if point.len() != analytic.len() {
        return Err(NnError::Shape(format!(
            "grad_check: {} coordinates but {} analytic gradients",
            point.len(),
            analytic.len()
        )));
    }
    compare(analytic, &central_difference_weighted(f, point, weights), tolerance)
}

fn compare(analytic: &[f64], numeric: &[f64], tolerance: f64) -> Result<GradCheckReport, NnError> {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: analytic.len(),
    };
    for (index, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel_error = relative_error(a, n);
        if rel_error > tolerance {
            return Err(NnError::GradCheck {
                index,
                analytic: a,
                numeric: n,
                rel_error,
                tolerance,
            });
        }
        if rel_error > report.max_rel_error {
            report.max_rel_error = rel_error;
            report.worst_index = index;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let report = grad_check(|w| w[0] * w[0], &[3.0], &[6.0], 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-6);
        let numeric = central_difference(|w| w[0] * w[0], &[3.0]);
        assert!((numeric[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let f = |w: &[f64]| w[0] * w[0] + (w[1] * 2.0).sin();
        let point = [1.5, 0.3];
        let good = [3.0, 2.0 * (0.6f64).cos()];
        grad_check(f, &point, &good, 1e-6).unwrap();
        let bad = [good[0], good[1] * 1.1];
        match grad_check(f, &point, &bad, 1e-6) {
            Err(NnError::GradCheck { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}
