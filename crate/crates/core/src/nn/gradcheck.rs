//! Central finite-difference comparison for analytic gradients.

/// Compares `analytic` against central differences of `f` around `params`.
///
/// For each coordinate `i` the function is evaluated at `params[i] +/- h`
/// and the relative error `|a - n| / max(|a|, |n|, 1e-6)` is formed; the
/// maximum over coordinates is returned. Well-behaved analytic gradients on
/// O(1)-scaled problems score well below `1e-4` at `h = 1e-6`.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        params.len(),
        analytic.len(),
        "finite_diff_check: analytic gradient length mismatch"
    );
    let mut work = params.to_vec();
    let mut max_err = 0.0_f64;
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = f(&work);
        work[i] = orig - h;
        let minus = f(&work);
        work[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        let err = (analytic[i] - numeric).abs() / denom;
        if err > max_err {
            max_err = err;
        }
    }
    max_err
}
