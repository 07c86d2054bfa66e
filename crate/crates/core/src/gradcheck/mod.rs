//! Reverse-mode gradients for the training path and their verification
//! against central finite differences.

mod backward;
mod record;
mod suite;

pub use backward::{
    backward_context, backward_monotonic_alpha, backward_monotonic_alpha_scan, energy_bahdanau_backward, key_backward,
    query_backward, score_backward, sigmoid_backward, softmax_backward,
};
pub use record::{backward_full_step, ComputationRecord, StepGrads};
pub(crate) use suite::{Instance, Packer, Reader};
pub use suite::{run_op, run_suite, OpReport, ParamReport, SuiteConfig, SUITE_OPS};

use crate::error::{domain, Result};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every
/// coordinate of `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Entrywise comparison of an analytic and a numeric gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    /// `|a - n| / max(|a|, |n|, abs_tol)` per entry.
    pub rel_errors: Vec<f64>,
    pub abs_errors: Vec<f64>,
    pub max_rel: f64,
    pub max_abs: f64,
    /// Largest relative error among entries whose absolute error exceeds
    /// `abs_tol`; these are the entries that decide `passed`.
    pub max_rel_above_floor: f64,
    pub passed: bool,
}

/// An entry passes when its relative error is at most `rel_tol` or its
/// absolute error is at most `abs_tol`.
pub fn check_gradients(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> Result<GradReport> {
    if analytic.len() != numeric.len() {
        return domain(format!(
            "gradient lengths differ: {} analytic vs {} numeric",
            analytic.len(),
            numeric.len()
        ));
    }
    let mut rel_errors = Vec::with_capacity(analytic.len());
    let mut abs_errors = Vec::with_capacity(analytic.len());
    let mut passed = true;
    let mut max_rel_above_floor = 0.0_f64;
    for (a, n) in analytic.iter().zip(numeric) {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(abs_tol);
        // NaN fails both comparisons.
        if !(abs <= abs_tol) {
            max_rel_above_floor = max_rel_above_floor.max(if rel.is_nan() { f64::INFINITY } else { rel });
        }
        if !(rel <= rel_tol || abs <= abs_tol) {
            passed = false;
        }
        rel_errors.push(if rel.is_nan() { f64::INFINITY } else { rel });
        abs_errors.push(if abs.is_nan() { f64::INFINITY } else { abs });
    }
    Ok(GradReport {
        max_rel: rel_errors.iter().copied().fold(0.0, f64::max),
        max_abs: abs_errors.iter().copied().fold(0.0, f64::max),
        max_rel_above_floor,
        rel_errors,
        abs_errors,
        passed,
    })
}
