//! Assertion and differencing helpers shared by unit, integration and
//! acceptance tests.
#![doc(hidden)]

/// Asserts `|a - b| <= tol * max(|a|, |b|)`, with an absolute floor for
/// values that are both essentially zero.
#[track_caller]
pub fn assert_rel(a: f64, b: f64, tol: f64) {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        return;
    }
    let rel = (a - b).abs() / scale;
    assert!(rel <= tol, "relative difference {rel:.3e} exceeds {tol:.1e}: {a:.12e} vs {b:.12e}");
}

/// Relative difference between two values, scaled by the larger magnitude.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Central finite difference with step-size selection in the style of
/// Ridders: Richardson-extrapolated estimates over a ladder of step sizes,
/// returning the average of the pair that agrees best. Robust across regions
/// where the optimal step varies by orders of magnitude.
pub fn central_difference(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    central_difference_scaled(f, x, x.abs().max(1e-30))
}

/// [`central_difference`] with an explicit step scale, for arguments whose
/// own magnitude is far below the function's variation scale.
pub fn central_difference_scaled(f: &dyn Fn(f64) -> f64, x: f64, scale: f64) -> f64 {
    let richardson = |h: f64| {
        let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        (4.0 * d(h / 2.0) - d(h)) / 3.0
    };
    let rungs = [3e-1, 1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5];
    let estimates: Vec<f64> = rungs.iter().map(|&k| richardson(scale * k)).collect();
    let mut best = estimates[0];
    let mut best_gap = f64::INFINITY;
    for w in estimates.windows(2) {
        let gap = (w[1] - w[0]).abs() / w[0].abs().max(w[1].abs()).max(1e-300);
        if gap < best_gap {
            best_gap = gap;
            best = 0.5 * (w[0] + w[1]);
        }
    }
    best
}

pub use crate::util::{linspace, log_spaced};
