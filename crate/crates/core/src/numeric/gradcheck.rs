//! Central-difference verification of analytic gradients (64-bit only).

use super::{NumericError, Result};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Coordinate at which the maximum occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `analytic` against central differences of `function` at
/// `parameters`, returning the worst relative error
/// `|a − c| / max(|a|, |c|, 1e-8)`.
pub fn finite_difference_check<Fun>(
    mut function: Fun,
    parameters: &[f64],
    analytic: &[f64],
    step: f64,
) -> Result<GradCheckReport>
where
    Fun: FnMut(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-4).contains(&step) {
        return Err(NumericError::InvalidArgument(format!(
            "finite-difference step {step} outside [1e-7, 1e-4]"
        )));
    }
    if analytic.len() != parameters.len() {
        return Err(NumericError::ShapeMismatch {
            op: "finite_difference_check",
            left: vec![parameters.len()],
            right: vec![analytic.len()],
        });
    }
    let mut point = parameters.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..point.len() {
        let original = point[i];
        point[i] = original + step;
        let plus = evaluate(&mut function, &point)?;
        point[i] = original - step;
        let minus = evaluate(&mut function, &point)?;
        point[i] = original;

        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if err > report.max_relative_error || i == 0 {
            report = GradCheckReport {
                max_relative_error: err.max(report.max_relative_error),
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(report)
}

fn evaluate<Fun>(function: &mut Fun, point: &[f64]) -> Result<f64>
where
    Fun: FnMut(&[f64]) -> Result<f64>,
{
    let v = function(point)?;
    if !v.is_finite() {
        return Err(NumericError::NonFinite {
            op: "finite_difference_check",
        });
    }
    Ok(v)
}
