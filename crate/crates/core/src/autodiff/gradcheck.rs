use super::TensorError;

/// Gradient magnitudes below this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_rel_error: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: Option<usize>,
    pub numeric: Vec<f64>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences `(f(x+ε) - f(x-ε)) / 2ε`
/// for every coordinate of `x`.
///
/// `f` must be deterministic; it is evaluated twice at `x` up front and a
/// differing result invalidates the check.
pub fn finite_diff_check<F>(mut f: F, x: &[f64], analytic: &[f64], eps: f64) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(TensorError::CheckInvalid(format!("step must be positive, got {eps}")));
    }
    if x.len() != analytic.len() {
        return Err(TensorError::CheckInvalid(format!(
            "{} coordinates but {} analytic gradients",
            x.len(),
            analytic.len()
        )));
    }
    let first = f(x);
    let second = f(x);
    if first.to_bits() != second.to_bits() {
        return Err(TensorError::CheckInvalid(format!(
            "function is not deterministic ({first} vs {second})"
        )));
    }
    let mut point = x.to_vec();
    let mut numeric = Vec::with_capacity(x.len());
    let mut max_rel_error: f64 = 0.0;
    let mut worst_index = None;
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let plus = f(&point);
        point[i] = orig - eps;
        let minus = f(&point);
        point[i] = orig;
        let n = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[i], n);
        if worst_index.is_none() || err > max_rel_error {
            max_rel_error = err;
            worst_index = Some(i);
        }
        numeric.push(n);
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        numeric,
        checked: x.len(),
    })
}
