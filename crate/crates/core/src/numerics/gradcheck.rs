use crate::error::{Error, Result};

/// Outcome of a central-difference gradient comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `max |g_ad − g_fd| / max(1, |g_ad|, |g_fd|)` over all coordinates.
    pub max_rel_error: f64,
    /// Coordinate attaining the maximum.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the gradient returned by `f` against central finite differences.
///
/// `f` maps a flat parameter vector to `(value, analytic gradient)`. It must
/// be deterministic: the base point is evaluated twice and any difference is
/// reported as a contract error.
pub fn finite_difference_check<F>(mut f: F, params: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (v1, analytic) = f(params)?;
    let (v2, _) = f(params)?;
    if v1.to_bits() != v2.to_bits() {
        return Err(Error::Contract(format!(
            "function is not deterministic: {v1} vs {v2} at the same point"
        )));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "finite_difference_check",
            &[params.len()],
            &[analytic.len()],
        ));
    }

    let mut point = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let (plus, _) = f(&point)?;
        point[i] = orig - eps;
        let (minus, _) = f(&point)?;
        point[i] = orig;
        numeric.push((plus - minus) / (2.0 * eps));
    }

    let (mut max_rel_error, mut worst_index) = (0.0, 0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - n).abs() / 1f64.max(a.abs()).max(n.abs());
        if err > max_rel_error {
            max_rel_error = err;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}
