//! Steady-state patterning analysis.
//!
//! On an equitable network the steady states with class-homogeneous outputs
//! solve a scalar fixed-point problem: the composition of the two cell
//! response maps with the two transceiver coupling maps. The composed map is
//! positive, increasing and bounded, so it crosses the diagonal an odd number
//! of times; the slope at each crossing decides stability. A slope above one
//! at the near-homogeneous crossing forces two additional contrasting
//! crossings — the patterned outcome.
//!
//! The scalar slope test is cross-validated here against the spectrum of the
//! full network Jacobian and against the eigenstructure of the composed
//! dc-gain matrix of the two linearized transceivers.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetics::{
    cell_input_gain, cell_jacobian, cell_steady_state, CellMap, ParameterSet,
};
use crate::maps::ScalarMap;
use crate::simulate::NetworkModel;
use crate::transceiver::{
    dc_gain, quotient_dc_gain, transceiver_steady_state, CouplingMap, TransceiverState,
};
use crate::util::{linspace, log_spaced};

/// Composed scalar map for the A-side output, `T_A ∘ T_BA ∘ T_B ∘ T_AB`,
/// with the chain-rule slope and the paired B-side value.
#[derive(Debug, Clone)]
pub struct PatternMap {
    t_ab: CouplingMap,
    t_b: CellMap,
    t_ba: CouplingMap,
    t_a: CellMap,
    upper: f64,
}

impl PatternMap {
    /// Builds the composition for an equitable network with quotient weights
    /// `dbar_ab` (A into class B) and `dbar_ba` (B into class A).
    pub fn new(
        params_a: &ParameterSet,
        params_b: &ParameterSet,
        dbar_ab: f64,
        dbar_ba: f64,
    ) -> Self {
        let t_ab = CouplingMap::new(dbar_ab, dbar_ba, params_a, params_b);
        let t_ba = CouplingMap::new(dbar_ba, dbar_ab, params_b, params_a);
        let upper = params_a.synthase_gain() * (1.0 + params_a.rep_leak);
        PatternMap {
            t_ab,
            t_b: CellMap::new(params_b.clone()),
            t_ba,
            t_a: CellMap::new(params_a.clone()),
            upper,
        }
    }

    /// The mirror composition for the B-side output.
    pub fn mirror(params_a: &ParameterSet, params_b: &ParameterSet, dbar_ab: f64, dbar_ba: f64) -> Self {
        PatternMap::new(params_b, params_a, dbar_ba, dbar_ab)
    }

    /// Composition over the channel-loss-corrected two-compartment coupling;
    /// one lumped edge per species, since the loss depends on its decay rate.
    pub fn two_compartment_corrected(
        params_a: &ParameterSet,
        params_b: &ParameterSet,
        edge_x: crate::channel1d::CorrectedEdge,
        edge_y: crate::channel1d::CorrectedEdge,
    ) -> Self {
        let t_ab = CouplingMap::two_compartment_corrected(edge_x, params_a, params_b);
        let t_ba = CouplingMap::two_compartment_corrected(edge_y, params_b, params_a);
        let upper = params_a.synthase_gain() * (1.0 + params_a.rep_leak);
        PatternMap {
            t_ab,
            t_b: CellMap::new(params_b.clone()),
            t_ba,
            t_a: CellMap::new(params_a.clone()),
            upper,
        }
    }

    /// B-side output paired with an A-side value: `T_B(T_AB(z))`.
    pub fn partner(&self, z: f64) -> f64 {
        self.t_b.eval(self.t_ab.eval(z))
    }

    /// Least upper bound of the map (the A-cell's fully open output).
    pub fn upper_bound(&self) -> f64 {
        self.upper
    }
}

impl ScalarMap for PatternMap {
    fn eval(&self, z: f64) -> f64 {
        self.t_a.eval(self.t_ba.eval(self.t_b.eval(self.t_ab.eval(z))))
    }

    /// Product of the four slopes along the chain.
    fn slope(&self, z: f64) -> f64 {
        let s_ab = self.t_ab.slope(z);
        let r_b = self.t_ab.eval(z);
        let s_b = self.t_b.slope(r_b);
        let z_b = self.t_b.eval(r_b);
        let s_ba = self.t_ba.slope(z_b);
        let r_a = self.t_ba.eval(z_b);
        let s_a = self.t_a.slope(r_a);
        s_ab * s_b * s_ba * s_a
    }
}

/// Stability of one fixed point of the reduced scalar system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityLabel {
    Stable,
    Unstable,
    Marginal,
}

/// One fixed point of the reduced maps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPoint {
    /// A-side output (M).
    pub z_a: f64,
    /// Paired B-side output (M).
    pub z_b: f64,
    /// Common slope of both composed maps at the point.
    pub slope: f64,
    pub label: StabilityLabel,
}

/// All fixed points of the reduced scalar system found in a bracket.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    /// Points sorted by increasing `z_a`.
    pub points: Vec<FixedPoint>,
    /// Search interval (M).
    pub bracket: (f64, f64),
    /// Index of the near-homogeneous point (smallest |ln(z_b/z_a)|).
    pub near_homogeneous: usize,
    /// Three or more points with an unstable middle and a contrasting
    /// stable outer pair.
    pub is_patterned: bool,
    /// The near-homogeneous slope sits inside the marginal band.
    pub marginal: bool,
}

/// Half-width of the slope band treated as numerically marginal.
pub const MARGINAL_BAND: f64 = 1e-6;

const SCAN_LOG_POINTS: usize = 4096;
const SCAN_LINEAR_POINTS: usize = 64;
const SCAN_FLOOR: f64 = 1e-15;

fn bisect<M: ScalarMap>(map: &M, mut lo: f64, mut hi: f64) -> f64 {
    let g = |z: f64| map.eval(z) - z;
    let mut g_lo = g(lo);
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        z = 0.5 * (lo + hi);
        let g_mid = g(z);
        if g_mid == 0.0 || (hi - lo) < 1e-18 && g_mid.abs() < 1e-15 {
            break;
        }
        if (hi - lo) < 1e-20 {
            break;
        }
        if (g_lo > 0.0) == (g_mid > 0.0) {
            lo = z;
            g_lo = g_mid;
        } else {
            hi = z;
        }
    }
    // Newton polish with the analytic slope pushes the root to the few-ulp
    // level, which steep compositions need for consistent slope evaluation.
    for _ in 0..6 {
        let gz = g(z);
        if gz == 0.0 {
            break;
        }
        let d = map.slope(z) - 1.0;
        if d.abs() < 1e-300 {
            break;
        }
        let step = gz / d;
        let candidate = z - step;
        if !(candidate > 0.0) || !candidate.is_finite() {
            break;
        }
        if g(candidate).abs() >= gz.abs() {
            break;
        }
        z = candidate;
    }
    z
}

/// Locates every diagonal crossing of a positive increasing bounded map.
///
/// Scans a dense log grid (plus a linear fill near zero) for sign changes of
/// `map(z) - z`, refines each by bisection, deduplicates near-identical
/// roots, and labels each by the chain-rule slope.
pub fn find_fixed_points<M: ScalarMap>(map: &M, bracket_max: Option<f64>) -> Result<FixedPointReport>
where
    M: PatternEval,
{
    let z_max = bracket_max.unwrap_or_else(|| map.pattern_upper_bound() * 1.01);
    if !(z_max > SCAN_FLOOR) {
        return Err(Error::domain("empty search bracket"));
    }

    let mut grid = Vec::with_capacity(SCAN_LOG_POINTS + SCAN_LINEAR_POINTS);
    grid.extend(linspace(0.0, SCAN_FLOOR, SCAN_LINEAR_POINTS));
    grid.extend(log_spaced(SCAN_FLOOR, z_max, SCAN_LOG_POINTS));

    let g = |z: f64| map.eval(z) - z;
    let mut roots = Vec::new();
    let mut prev_z = grid[0];
    let mut prev_g = g(prev_z);
    for &z in &grid[1..] {
        let cur = g(z);
        if prev_g == 0.0 {
            roots.push(prev_z);
        } else if (prev_g > 0.0) != (cur > 0.0) {
            roots.push(bisect(map, prev_z, z));
        }
        prev_z = z;
        prev_g = cur;
    }
    if prev_g == 0.0 {
        roots.push(prev_z);
    }

    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut dedup: Vec<f64> = Vec::new();
    for r in roots {
        match dedup.last() {
            Some(&last) if (r - last).abs() <= 1e-3 * r.abs().max(SCAN_FLOOR) => {
                // Keep the refinement with the smaller residual.
                if g(r).abs() < g(last).abs() {
                    *dedup.last_mut().unwrap() = r;
                }
            }
            _ => dedup.push(r),
        }
    }

    if dedup.is_empty() {
        return Err(Error::Internal(
            "a continuous bounded increasing map must cross the diagonal".into(),
        ));
    }

    let points: Vec<FixedPoint> = dedup
        .into_iter()
        .map(|z_a| {
            let slope = map.slope(z_a);
            let label = if (slope - 1.0).abs() <= MARGINAL_BAND {
                StabilityLabel::Marginal
            } else if slope < 1.0 {
                StabilityLabel::Stable
            } else {
                StabilityLabel::Unstable
            };
            FixedPoint { z_a, z_b: map.pattern_partner(z_a), slope, label }
        })
        .collect();

    let near_homogeneous = points
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a.z_b / a.z_a.max(1e-300)).ln().abs();
            let db = (b.z_b / b.z_a.max(1e-300)).ln().abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();

    let near = &points[near_homogeneous];
    let marginal = (near.slope - 1.0).abs() <= MARGINAL_BAND;
    let crossing = points.len() >= 3 && {
        let first = &points[0];
        let last = &points[points.len() - 1];
        last.z_a > near.z_a
            && last.z_b < near.z_b
            && first.z_a < near.z_a
            && first.z_b > near.z_b
            && first.label == StabilityLabel::Stable
            && last.label == StabilityLabel::Stable
    };
    let is_patterned = crossing && near.slope > 1.0 + MARGINAL_BAND;

    Ok(FixedPointReport {
        points,
        bracket: (0.0, z_max),
        near_homogeneous,
        is_patterned,
        marginal,
    })
}

/// Partner/bound access used by the fixed-point finder; kept separate from
/// [`ScalarMap`] so synthetic test maps can implement it too.
pub trait PatternEval: ScalarMap {
    fn pattern_partner(&self, z: f64) -> f64;
    fn pattern_upper_bound(&self) -> f64;
}

impl PatternEval for PatternMap {
    fn pattern_partner(&self, z: f64) -> f64 {
        self.partner(z)
    }
    fn pattern_upper_bound(&self) -> f64 {
        self.upper_bound()
    }
}

/// Final verdict of the reduced-map analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternOutcome {
    Patterned,
    Homogeneous,
}

/// Patterned iff at least three fixed points exist and the near-homogeneous
/// one has slope above one. A marginal middle slope classifies as
/// homogeneous; the report's `marginal` flag surfaces it.
pub fn classify_patterning(report: &FixedPointReport) -> PatternOutcome {
    let near = &report.points[report.near_homogeneous];
    if report.points.len() >= 3 && near.slope > 1.0 + MARGINAL_BAND {
        PatternOutcome::Patterned
    } else {
        PatternOutcome::Homogeneous
    }
}

/// Class-homogeneous steady state of the full network assembled from the
/// reduced outputs `(z_a, z_b)`: cell chains at their complex inputs and
/// both transceivers from the exact linear solve.
pub fn assemble_steady_state(model: &NetworkModel, z_a: f64, z_b: f64) -> Result<Vec<f64>> {
    let lay = model.layout;
    let (n_a, n_b) = (lay.n_a, lay.n_b);

    let tx_x = transceiver_steady_state(
        &vec![z_a; n_a],
        model.laplacian_a_first(),
        &model.params_a,
        &model.params_b,
    )?;
    let tx_y = transceiver_steady_state(
        &vec![z_b; n_b],
        model.laplacian_b_first(),
        &model.params_b,
        &model.params_a,
    )?;

    let mut y = vec![0.0; lay.dim()];
    for i in 0..n_a {
        let cell = cell_steady_state(tx_y.complex[i], &model.params_a);
        y[lay.cell_a(i)..lay.cell_a(i) + 4].copy_from_slice(&cell.as_array());
        y[lay.x_a(i)] = tx_x.sender[i];
        y[lay.y_a(i)] = tx_y.receiver[i];
        y[lay.r_a(i)] = tx_y.complex[i];
    }
    for j in 0..n_b {
        let cell = cell_steady_state(tx_x.complex[j], &model.params_b);
        y[lay.cell_b(j)..lay.cell_b(j) + 4].copy_from_slice(&cell.as_array());
        y[lay.x_b(j)] = tx_x.receiver[j];
        y[lay.y_b(j)] = tx_y.sender[j];
        y[lay.r_b(j)] = tx_x.complex[j];
    }
    Ok(y)
}

/// Jacobian of the full network at a flat state: cell blocks and transceiver
/// blocks on the diagonal, production and detection couplings off it.
pub fn full_jacobian(model: &NetworkModel, y: &[f64]) -> DMatrix<f64> {
    let lay = model.layout;
    let (n_a, n_b) = (lay.n_a, lay.n_b);
    let dim = lay.dim();
    let mut jac = DMatrix::zeros(dim, dim);

    for i in 0..n_a {
        let base = lay.cell_a(i);
        let cell = crate::kinetics::CellState::from_slice(&y[base..base + 4]);
        let block = cell_jacobian(&cell, &model.params_a);
        for r in 0..4 {
            for c in 0..4 {
                jac[(base + r, base + c)] = block[r][c];
            }
        }
        jac[(base, lay.r_a(i))] = cell_input_gain(y[lay.r_a(i)], &model.params_a);
        jac[(lay.x_a(i), base + 3)] = model.params_a.ahl_production;
    }
    for j in 0..n_b {
        let base = lay.cell_b(j);
        let cell = crate::kinetics::CellState::from_slice(&y[base..base + 4]);
        let block = cell_jacobian(&cell, &model.params_b);
        for r in 0..4 {
            for c in 0..4 {
                jac[(base + r, base + c)] = block[r][c];
            }
        }
        jac[(base, lay.r_b(j))] = cell_input_gain(y[lay.r_b(j)], &model.params_b);
        jac[(lay.y_b(j), base + 3)] = model.params_b.ahl_production;
    }

    let tx_x = TransceiverState::from_flat(&y[lay.x_a(0)..lay.x_a(0) + n_a + 2 * n_b], n_a, n_b);
    let jx = crate::transceiver::transceiver_jacobian(
        &tx_x,
        model.laplacian_a_first(),
        &model.params_a,
        &model.params_b,
    );
    let off_x = lay.x_a(0);
    for r in 0..jx.nrows() {
        for c in 0..jx.ncols() {
            jac[(off_x + r, off_x + c)] += jx[(r, c)];
        }
    }

    let tx_y = TransceiverState::from_flat(&y[lay.y_b(0)..lay.y_b(0) + n_b + 2 * n_a], n_b, n_a);
    let jy = crate::transceiver::transceiver_jacobian(
        &tx_y,
        model.laplacian_b_first(),
        &model.params_b,
        &model.params_a,
    );
    let off_y = lay.y_b(0);
    for r in 0..jy.nrows() {
        for c in 0..jy.ncols() {
            jac[(off_y + r, off_y + c)] += jy[(r, c)];
        }
    }

    jac
}

/// Largest real part of the spectrum of the full Jacobian at an assembled
/// steady state.
pub fn spectral_abscissa(jac: &DMatrix<f64>) -> f64 {
    jac.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Result of checking the composed transceiver dc-gain spectrum against the
/// quotient prediction at one fixed point.
#[derive(Debug, Clone, Serialize)]
pub struct QuotientGainCheck {
    /// Slope product predicted by the 3×3 quotient blocks.
    pub quotient_value: f64,
    /// Relative residual of the all-ones eigenvector equation.
    pub eigenvector_residual: f64,
    /// Spectral radius of the composed full dc-gain matrix.
    pub spectral_radius: f64,
    /// The quotient value is the largest-modulus eigenvalue.
    pub is_dominant: bool,
    pub passed: bool,
}

/// Verifies that the quotient slope product `T'_AB * T'_BA` is the dominant
/// eigenvalue, with the all-ones eigenvector, of the composed dc-gain matrix
/// of both linearized transceivers at the fixed point `(z_a, z_b)`.
pub fn verify_quotient_eigenvalue(
    model: &NetworkModel,
    z_a: f64,
    z_b: f64,
    tol: f64,
) -> Result<QuotientGainCheck> {
    let lay = model.layout;
    let pair = model.graph.check_equitable(1e-9)?;

    let tx_x = transceiver_steady_state(
        &vec![z_a; lay.n_a],
        model.laplacian_a_first(),
        &model.params_a,
        &model.params_b,
    )?;
    let tx_y = transceiver_steady_state(
        &vec![z_b; lay.n_b],
        model.laplacian_b_first(),
        &model.params_b,
        &model.params_a,
    )?;
    let gain_ab = dc_gain(&tx_x, model.laplacian_a_first(), &model.params_a, &model.params_b)?;
    let gain_ba = dc_gain(&tx_y, model.laplacian_b_first(), &model.params_b, &model.params_a)?;
    let composed = &gain_ba * &gain_ab;

    let (_, _, _, q_ab) =
        quotient_dc_gain(z_a, pair.dbar_ab, pair.dbar_ba, &model.params_a, &model.params_b)?;
    let (_, _, _, q_ba) =
        quotient_dc_gain(z_b, pair.dbar_ba, pair.dbar_ab, &model.params_b, &model.params_a)?;
    let quotient_value = q_ab * q_ba;

    // Residual of M 1 = s 1, relative to s.
    let mut residual = 0.0f64;
    for i in 0..composed.nrows() {
        let row_sum: f64 = (0..composed.ncols()).map(|j| composed[(i, j)]).sum();
        residual = residual.max((row_sum - quotient_value).abs());
    }
    let residual = residual / quotient_value.abs().max(1e-300);

    let spectral_radius =
        composed.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0f64, f64::max);
    let is_dominant =
        (spectral_radius - quotient_value).abs() <= tol.max(1e-12) * quotient_value.abs().max(1e-300);

    let passed = residual < tol && is_dominant && quotient_value > 0.0;
    Ok(QuotientGainCheck {
        quotient_value,
        eigenvector_residual: residual,
        spectral_radius,
        is_dominant,
        passed,
    })
}
