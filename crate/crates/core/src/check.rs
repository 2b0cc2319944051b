//! Central finite-difference helpers for gradient verification.
//!
//! These evaluate a closure twice per coordinate and never touch the
//! analytic backward paths, so they stay independent of the code they
//! check.

/// Central difference `df/dx` at `x` with the given step.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Error between an analytic derivative and a reference value: relative
/// when either is appreciable, absolute near zero (where relative error
/// is meaningless for finite differences).
pub fn grad_error(analytic: f64, reference: f64) -> f64 {
    let denom = analytic.abs().max(reference.abs());
    let diff = (analytic - reference).abs();
    if denom > 1e-7 {
        diff / denom
    } else {
        diff
    }
}

/// Panics unless `analytic` matches `reference` to the given tolerance
/// under [`grad_error`].
#[track_caller]
pub fn assert_grad_close(analytic: f64, reference: f64, tol: f64, what: &str) {
    let err = grad_error(analytic, reference);
    assert!(
        err <= tol,
        "{what}: analytic {analytic:.12e} vs finite difference {reference:.12e} (err {err:.3e} > {tol:.1e})"
    );
}
