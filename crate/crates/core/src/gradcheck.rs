//! Central finite-difference gradient checking.
//!
//! The checker only evaluates a scalar function at perturbed inputs; it never
//! looks at the analytic backward code it is used to verify.

use crate::scalar::Scalar;

/// Worst disagreement found by [`check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Relative error with a small absolute floor so that two near-zero values
/// compare as equal: `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const DEFAULT_STEP: f64 = 1e-6;
/// Denominator floor: at step 1e-6 the difference quotient of an O(1) loss
/// carries about 1e-10 of rounding noise, so exact zeros need a floor well
/// above that.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Compare `analytic` against `(f(x + h e_i) - f(x - h e_i)) / 2h` for every
/// index in `indices` (all coordinates when `None`).
pub fn check<T: Scalar>(
    x: &[T],
    analytic: &[T],
    indices: Option<&[usize]>,
    step: f64,
    mut f: impl FnMut(&[T]) -> f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match input");
    let all: Vec<usize> = (0..x.len()).collect();
    let indices = indices.unwrap_or(&all);
    let mut probe = x.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, checked: 0 };
    for &i in indices {
        let orig = probe[i];
        probe[i] = T::from_f64_lossy(orig.to_f64_lossy() + step);
        let plus = f(&probe);
        probe[i] = T::from_f64_lossy(orig.to_f64_lossy() - step);
        let minus = f(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i].to_f64_lossy();
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric, DEFAULT_FLOOR));
        report.checked += 1;
    }
    report
}
