//! Differentiable scalar input–output maps.
//!
//! Steady-state analysis works with static maps: the steady output of a block
//! held at a constant input. Each map carries its analytic derivative so slope
//! conditions never rely on finite differences outside of tests.

/// A scalar map with an analytic first derivative.
pub trait ScalarMap {
    /// Map value at `z`.
    fn eval(&self, z: f64) -> f64;

    /// Analytic derivative at `z`.
    fn slope(&self, z: f64) -> f64;
}

impl<M: ScalarMap + ?Sized> ScalarMap for &M {
    fn eval(&self, z: f64) -> f64 {
        (**self).eval(z)
    }
    fn slope(&self, z: f64) -> f64 {
        (**self).slope(z)
    }
}
