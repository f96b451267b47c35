//! Adaptive ODE integration.
//!
//! Two methods share one error-controlled driver: an explicit Dormand–Prince
//! 5(4) pair for non-stiff blocks, and a two-stage L-stable Rosenbrock pair
//! for the full network, whose receptor-binding terms put eigenvalues near
//! −500 s⁻¹ next to day-scale circuit dynamics. Both reject steps on the
//! mixed absolute/relative error test, project states back onto the
//! nonnegative orthant with violation accounting, and can stop early once the
//! scaled derivative stays below a threshold for a sustained window.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An autonomous ODE system with optional analytic Jacobian and a state
/// projection applied after every accepted step.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Writes dy/dt at `y` into `dy`.
    fn rhs(&self, y: &[f64], dy: &mut [f64]);

    /// Jacobian at `y`; the default is forward finite differences.
    fn jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>) {
        numeric_jacobian(self, y, jac);
    }

    /// Projects `y` back into the admissible set, returning the total
    /// magnitude moved. The default clamps negative components to zero.
    fn project(&self, y: &mut [f64]) -> f64 {
        let mut moved = 0.0;
        for v in y.iter_mut() {
            if *v < 0.0 {
                moved += -*v;
                *v = 0.0;
            }
        }
        moved
    }
}

impl<T: OdeSystem + ?Sized> OdeSystem for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        (**self).rhs(y, dy)
    }
    fn jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>) {
        (**self).jacobian(y, jac)
    }
    fn project(&self, y: &mut [f64]) -> f64 {
        (**self).project(y)
    }
}

/// Forward-difference Jacobian for systems without an analytic one.
pub fn numeric_jacobian<S: OdeSystem + ?Sized>(sys: &S, y: &[f64], jac: &mut DMatrix<f64>) {
    let n = sys.dim();
    let mut f0 = vec![0.0; n];
    sys.rhs(y, &mut f0);
    let scale = y.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    for j in 0..n {
        let h = 1.49e-8 * y[j].abs().max(1e-2 * scale);
        yp[j] = y[j] + h;
        sys.rhs(&yp, &mut fp);
        for i in 0..n {
            jac[(i, j)] = (fp[i] - f0[i]) / h;
        }
        yp[j] = y[j];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    /// Explicit Dormand–Prince 5(4).
    DormandPrince,
    /// Semi-implicit Rosenbrock 2(3), L-stable.
    Rosenbrock,
}

/// Early-stop rule: scaled derivative max |dy_i|/(|y_i| + floor) below
/// `rate_tol` continuously for `hold` seconds.
#[derive(Debug, Clone, Copy)]
pub struct SteadyCriterion {
    /// Rate threshold (s⁻¹).
    pub rate_tol: f64,
    /// How long the threshold must hold (s).
    pub hold: f64,
    /// Concentration floor shielding near-zero components (M).
    pub floor: f64,
}

impl Default for SteadyCriterion {
    fn default() -> Self {
        SteadyCriterion { rate_tol: 1e-10, hold: 3600.0, floor: 1e-16 }
    }
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub method: OdeMethod,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Integration horizon (s).
    pub t_end: f64,
    /// Output sampling interval (s); steps never straddle a sample time.
    pub sample_interval: f64,
    pub max_steps: usize,
    pub steady: Option<SteadyCriterion>,
}

impl OdeOptions {
    pub fn new(t_end: f64) -> Self {
        OdeOptions {
            method: OdeMethod::Rosenbrock,
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            t_end,
            sample_interval: t_end / 1000.0,
            max_steps: 5_000_000,
            steady: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// Sample times (s), strictly increasing, starting at 0.
    pub times: Vec<f64>,
    /// Sampled states, one vector per time.
    pub states: Vec<Vec<f64>>,
    /// Whether the steady criterion fired before `t_end`.
    pub steady: bool,
    /// Cumulative magnitude clamped by projection.
    pub projected: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// Scaled derivative at the final sample (s⁻¹).
    pub final_rate: f64,
}

impl OdeSolution {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("solution holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("solution holds at least the initial state")
    }
}

fn error_ratio(err: &[f64], y0: &[f64], y1: &[f64], rel: f64, abs: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..err.len() {
        let scale = abs + rel * y0[i].abs().max(y1[i].abs());
        worst = worst.max(err[i].abs() / scale);
    }
    worst
}

fn scaled_rate<S: OdeSystem + ?Sized>(sys: &S, y: &[f64], floor: f64) -> f64 {
    let mut dy = vec![0.0; y.len()];
    sys.rhs(y, &mut dy);
    dy.iter().zip(y).map(|(d, v)| d.abs() / (v.abs() + floor)).fold(0.0, f64::max)
}

/// Integrates `sys` from `y0`, sampling on the configured grid.
pub fn integrate<S: OdeSystem>(sys: &S, y0: &[f64], opts: &OdeOptions) -> Result<OdeSolution> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Dimension { expected: n, got: y0.len(), context: "initial state" });
    }
    if !(opts.t_end > 0.0) || !(opts.sample_interval > 0.0) {
        return Err(Error::domain("t_end and sample_interval must be positive"));
    }

    let mut stepper: Box<dyn Stepper> = match opts.method {
        OdeMethod::DormandPrince => Box::new(DormandPrince::new(n)),
        OdeMethod::Rosenbrock => Box::new(Rosenbrock::new(n)),
    };

    let mut y = y0.to_vec();
    let mut t = 0.0f64;
    let mut dt = (opts.sample_interval * 1e-3).max(1e-6);
    let min_dt = (opts.t_end * 1e-15).max(f64::MIN_POSITIVE * 1e6);

    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let mut next_sample = opts.sample_interval;

    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut projected = 0.0f64;
    let mut steady = false;
    let mut calm_since: Option<f64> = None;

    let mut y_try = vec![0.0; n];
    let mut err = vec![0.0; n];

    while t < opts.t_end {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::Stiffness { t, dt });
        }
        let target = next_sample.min(opts.t_end);
        let mut h = dt.min(target - t);
        if h < min_dt {
            h = min_dt;
        }

        stepper.step(sys, &y, h, &mut y_try, &mut err);
        let ratio = error_ratio(&err, &y, &y_try, opts.rel_tol, opts.abs_tol);

        if ratio <= 1.0 || h <= min_dt {
            t += h;
            y.copy_from_slice(&y_try);
            projected += sys.project(&mut y);
            accepted += 1;
            // Grow the step from the error estimate, but never by more than 5x.
            let factor =
                (0.9 * ratio.max(1e-10).powf(-stepper.error_exponent())).clamp(0.2, 5.0);
            dt = (h * factor).min(opts.t_end);

            if (t - target).abs() < 1e-9 * target.max(1.0) || t >= target {
                if t >= next_sample - 1e-9 * next_sample {
                    times.push(t);
                    states.push(y.clone());
                    next_sample += opts.sample_interval;
                }
            }

            if let Some(c) = &opts.steady {
                let rate = scaled_rate(sys, &y, c.floor);
                if rate < c.rate_tol {
                    let since = *calm_since.get_or_insert(t);
                    if t - since >= c.hold {
                        steady = true;
                        break;
                    }
                } else {
                    calm_since = None;
                }
            }
        } else {
            rejected += 1;
            let factor =
                (0.9 * ratio.powf(-stepper.error_exponent())).clamp(0.1, 0.9);
            dt = h * factor;
            if dt < min_dt {
                return Err(Error::Stiffness { t, dt });
            }
        }
    }

    if *times.last().unwrap() < t {
        times.push(t);
        states.push(y.clone());
    }

    let floor = opts.steady.map(|c| c.floor).unwrap_or(1e-16);
    let final_rate = scaled_rate(sys, &y, floor);
    Ok(OdeSolution { times, states, steady, projected, accepted, rejected, final_rate })
}

trait Stepper {
    /// Advances one trial step of size `h`, filling `y_out` and the local
    /// error estimate `err`.
    fn step(&mut self, sys: &dyn OdeSystem, y: &[f64], h: f64, y_out: &mut [f64], err: &mut [f64]);

    /// Exponent for the step-size controller (1/(order+1) of the error pair).
    fn error_exponent(&self) -> f64;
}

// Dormand–Prince 5(4) tableau.
const DP_C2: f64 = 1.0 / 5.0;
const DP_C3: f64 = 3.0 / 10.0;
const DP_C4: f64 = 4.0 / 5.0;
const DP_C5: f64 = 8.0 / 9.0;
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the 5th- and 4th-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DormandPrince {
    k: [Vec<f64>; 7],
    scratch: Vec<f64>,
}

impl DormandPrince {
    fn new(n: usize) -> Self {
        DormandPrince { k: std::array::from_fn(|_| vec![0.0; n]), scratch: vec![0.0; n] }
    }
}

impl Stepper for DormandPrince {
    fn step(
        &mut self,
        sys: &dyn OdeSystem,
        y: &[f64],
        h: f64,
        y_out: &mut [f64],
        err: &mut [f64],
    ) {
        let n = y.len();
        let _ = [DP_C2, DP_C3, DP_C4, DP_C5]; // nodes unused: autonomous systems
        sys.rhs(y, &mut self.k[0]);
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in self.k[..stage].iter().enumerate() {
                    acc += DP_A[stage - 1][j] * kj[i];
                }
                self.scratch[i] = y[i] + h * acc;
            }
            if stage < 6 {
                let (head, tail) = self.k.split_at_mut(stage + 1);
                let _ = tail;
                sys.rhs(&self.scratch, &mut head[stage]);
            } else {
                // Seventh stage is evaluated at the 5th-order solution.
                y_out.copy_from_slice(&self.scratch);
                sys.rhs(y_out, &mut self.k[6]);
            }
        }
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in self.k.iter().enumerate() {
                e += DP_E[j] * kj[i];
            }
            err[i] = h * e;
        }
    }

    fn error_exponent(&self) -> f64 {
        0.2
    }
}

struct Rosenbrock {
    n: usize,
    jac: DMatrix<f64>,
    f0: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    stage: Vec<f64>,
}

impl Rosenbrock {
    const D: f64 = 0.292_893_218_813_452_5; // 1/(2+sqrt(2))
    const E32: f64 = 7.414_213_562_373_095; // 6+sqrt(2)

    fn new(n: usize) -> Self {
        Rosenbrock {
            n,
            jac: DMatrix::zeros(n, n),
            f0: vec![0.0; n],
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }
}

impl Stepper for Rosenbrock {
    fn step(
        &mut self,
        sys: &dyn OdeSystem,
        y: &[f64],
        h: f64,
        y_out: &mut [f64],
        err: &mut [f64],
    ) {
        let n = self.n;
        sys.jacobian(y, &mut self.jac);
        let mut w = DMatrix::identity(n, n);
        w -= &self.jac * (h * Self::D);
        let lu = w.lu();

        sys.rhs(y, &mut self.f0);
        let k1 = lu
            .solve(&DVector::from_column_slice(&self.f0))
            .unwrap_or_else(|| DVector::from_column_slice(&self.f0));

        for i in 0..n {
            self.stage[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(&self.stage, &mut self.f1);
        let mut rhs2 = DVector::from_column_slice(&self.f1);
        for i in 0..n {
            rhs2[i] -= k1[i];
        }
        let mut k2 = lu.solve(&rhs2).unwrap_or(rhs2);
        k2 += &k1;

        for i in 0..n {
            y_out[i] = y[i] + h * k2[i];
        }
        sys.rhs(y_out, &mut self.f2);
        let mut rhs3 = DVector::from_column_slice(&self.f2);
        for i in 0..n {
            rhs3[i] -= Self::E32 * (k2[i] - self.f1[i]) + 2.0 * (k1[i] - self.f0[i]);
        }
        let k3 = lu.solve(&rhs3).unwrap_or(rhs3);

        for i in 0..n {
            err[i] = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
        }
    }

    fn error_exponent(&self) -> f64 {
        1.0 / 3.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::assert_rel;

    struct Decay {
        rate: f64,
    }

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.rate * y[0];
        }
    }

    /// One fast mode relaxing onto one slow mode.
    struct TwoScale;

    impl OdeSystem for TwoScale {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = -500.0 * (y[0] - y[1]);
            dy[1] = -0.01 * y[1];
        }
    }

    fn opts(method: OdeMethod, t_end: f64) -> OdeOptions {
        OdeOptions { method, rel_tol: 1e-9, abs_tol: 1e-12, ..OdeOptions::new(t_end) }
    }

    #[test]
    fn both_methods_reproduce_exponential_decay() {
        for (method, tol) in
            [(OdeMethod::DormandPrince, 1e-8), (OdeMethod::Rosenbrock, 1e-6)]
        {
            let sol = integrate(&Decay { rate: 0.37 }, &[2.0], &opts(method, 10.0)).unwrap();
            let exact = 2.0 * (-0.37f64 * 10.0).exp();
            assert_rel(sol.final_state()[0], exact, tol);
            assert_eq!(sol.times.len(), sol.states.len());
            assert!(sol.times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn rosenbrock_handles_the_stiff_pair_in_few_steps() {
        let t_end = 400.0;
        let mut o = opts(OdeMethod::Rosenbrock, t_end);
        o.rel_tol = 1e-6;
        o.abs_tol = 1e-10;
        o.sample_interval = 40.0;
        let stiff = integrate(&TwoScale, &[0.0, 1.0], &o).unwrap();
        let slow = (-0.01f64 * t_end).exp();
        // Fast variable tracks the slow one almost exactly at steady state.
        assert_rel(stiff.final_state()[1], slow, 1e-3);
        assert_rel(stiff.final_state()[0], slow * 500.0 / 500.01, 1e-3);
        assert!(
            stiff.accepted < 600,
            "stiff method took {} steps, expected far fewer",
            stiff.accepted
        );
        // The explicit method is stability-limited on the same task.
        let mut oe = o.clone();
        oe.method = OdeMethod::DormandPrince;
        let explicit = integrate(&TwoScale, &[0.0, 1.0], &oe).unwrap();
        assert!(explicit.accepted > 10 * stiff.accepted);
    }

    #[test]
    fn explicit_method_errors_out_when_the_step_budget_dies() {
        let mut o = opts(OdeMethod::DormandPrince, 4000.0);
        o.max_steps = 200;
        let err = integrate(&TwoScale, &[0.0, 1.0], &o).unwrap_err();
        assert!(matches!(err, Error::Stiffness { .. }));
    }

    #[test]
    fn projection_accounts_for_clamped_mass() {
        struct Sink;
        impl OdeSystem for Sink {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _y: &[f64], dy: &mut [f64]) {
                dy[0] = -1.0;
            }
        }
        let sol = integrate(&Sink, &[0.5], &opts(OdeMethod::DormandPrince, 2.0)).unwrap();
        assert!(sol.final_state()[0] >= 0.0);
        assert!(sol.projected > 0.0);
    }

    #[test]
    fn steady_detection_stops_early() {
        struct Relax;
        impl OdeSystem for Relax {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, y: &[f64], dy: &mut [f64]) {
                dy[0] = -(y[0] - 2.0);
            }
        }
        let mut o = opts(OdeMethod::Rosenbrock, 1e6);
        o.sample_interval = 100.0;
        o.steady = Some(SteadyCriterion { rate_tol: 1e-10, hold: 50.0, floor: 1e-16 });
        let sol = integrate(&Relax, &[0.0], &o).unwrap();
        assert!(sol.steady);
        assert!(sol.final_time() < 1e6);
        assert_rel(sol.final_state()[0], 2.0, 1e-9);
    }

    #[test]
    fn numeric_jacobian_matches_linear_system() {
        let sys = TwoScale;
        let mut jac = DMatrix::zeros(2, 2);
        numeric_jacobian(&sys, &[0.3, 0.9], &mut jac);
        assert_rel(jac[(0, 0)], -500.0, 1e-6);
        assert_rel(jac[(0, 1)], 500.0, 1e-6);
        assert!(jac[(1, 0)].abs() < 1e-6);
        assert_rel(jac[(1, 1)], -0.01, 1e-5);
    }

    #[test]
    fn samples_land_on_the_requested_grid() {
        let mut o = opts(OdeMethod::Rosenbrock, 10.0);
        o.sample_interval = 1.0;
        let sol = integrate(&Decay { rate: 0.1 }, &[1.0], &o).unwrap();
        assert_eq!(sol.times.len(), 11);
        for (i, t) in sol.times.iter().enumerate() {
            assert!((t - i as f64).abs() < 1e-6, "sample {i} at {t}");
        }
    }
}
