//! Full-network ODE model: cells wired to both transceivers.
//!
//! The flat state vector follows the block order used throughout the
//! stability analysis: A-cell chains, then the first transceiver
//! (`[X_A | X_B | R_B]`), then B-cell chains, then the mirror transceiver
//! (`[Y_B | Y_A | R_A]`). Within a cell block the order is
//! `[repressor mRNA, repressor, synthase mRNA, synthase]`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::CompartmentGraph;
use crate::kinetics::{cell_rhs_inner, CellState, ParameterSet};
use crate::ode::{self, OdeMethod, OdeOptions, OdeSystem, SteadyCriterion};
use crate::transceiver::rhs_inner;

/// Index map over the flat network state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkLayout {
    pub n_a: usize,
    pub n_b: usize,
}

impl NetworkLayout {
    pub fn dim(&self) -> usize {
        7 * (self.n_a + self.n_b)
    }

    pub fn cell_a(&self, i: usize) -> usize {
        4 * i
    }

    fn x_block(&self) -> usize {
        4 * self.n_a
    }

    pub fn x_a(&self, i: usize) -> usize {
        self.x_block() + i
    }

    pub fn x_b(&self, j: usize) -> usize {
        self.x_block() + self.n_a + j
    }

    pub fn r_b(&self, j: usize) -> usize {
        self.x_block() + self.n_a + self.n_b + j
    }

    pub fn cell_b(&self, j: usize) -> usize {
        self.x_block() + self.n_a + 2 * self.n_b + 4 * j
    }

    fn y_block(&self) -> usize {
        self.cell_b(0) + 4 * self.n_b
    }

    pub fn y_b(&self, j: usize) -> usize {
        self.y_block() + j
    }

    pub fn y_a(&self, i: usize) -> usize {
        self.y_block() + self.n_b + i
    }

    pub fn r_a(&self, i: usize) -> usize {
        self.y_block() + self.n_b + self.n_a + i
    }

    /// Start offsets and sizes of the four dynamical blocks, in order.
    pub fn blocks(&self) -> [(usize, usize); 4] {
        let n = self.n_a + self.n_b;
        [
            (0, 4 * self.n_a),
            (self.x_block(), n + self.n_b),
            (self.cell_b(0), 4 * self.n_b),
            (self.y_block(), n + self.n_a),
        ]
    }

    /// Column labels for exported trajectories, one per state component.
    pub fn labels(&self, graph: &CompartmentGraph) -> Vec<String> {
        let ids: Vec<&str> = graph.vertices().iter().map(|v| v.id.as_str()).collect();
        let a_ids = &ids[..self.n_a];
        let b_ids = &ids[self.n_a..];
        let mut out = vec![String::new(); self.dim()];
        let cell_parts = ["repressor_mrna", "repressor", "synthase_mrna", "synthase"];
        for (i, id) in a_ids.iter().enumerate() {
            for (k, part) in cell_parts.iter().enumerate() {
                out[self.cell_a(i) + k] = format!("{id}.{part}");
            }
            out[self.x_a(i)] = format!("{id}.ahl_x");
            out[self.y_a(i)] = format!("{id}.ahl_y");
            out[self.r_a(i)] = format!("{id}.complex");
        }
        for (j, id) in b_ids.iter().enumerate() {
            for (k, part) in cell_parts.iter().enumerate() {
                out[self.cell_b(j) + k] = format!("{id}.{part}");
            }
            out[self.x_b(j)] = format!("{id}.ahl_x");
            out[self.y_b(j)] = format!("{id}.ahl_y");
            out[self.r_b(j)] = format!("{id}.complex");
        }
        out
    }
}

/// A compartment network bound to its parameter sets, ready to integrate.
///
/// `params_a` governs the A-type circuit and the species it emits;
/// `params_b` the mirror side. Binding constants always come from the
/// receiving side's set.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub graph: CompartmentGraph,
    pub params_a: ParameterSet,
    pub params_b: ParameterSet,
    pub layout: NetworkLayout,
    lap_a_first: DMatrix<f64>,
    lap_b_first: DMatrix<f64>,
}

impl NetworkModel {
    pub fn new(
        graph: CompartmentGraph,
        params_a: ParameterSet,
        params_b: ParameterSet,
    ) -> Result<Self> {
        params_a.validate()?;
        params_b.validate()?;
        let n_a = graph.n_a();
        let n_b = graph.n_b();
        if n_a == 0 || n_b == 0 {
            return Err(Error::domain("network needs at least one compartment of each type"));
        }
        let lap_a_first = graph.laplacian()?;
        let lap_b_first = graph.laplacian_b_first()?;
        Ok(NetworkModel {
            graph,
            params_a,
            params_b,
            layout: NetworkLayout { n_a, n_b },
            lap_a_first,
            lap_b_first,
        })
    }

    /// Symmetric model: both cell types share one parameter set.
    pub fn symmetric(graph: CompartmentGraph, params: ParameterSet) -> Result<Self> {
        NetworkModel::new(graph, params.clone(), params)
    }

    /// Model with explicit coupling matrices instead of the graph Laplacian,
    /// for channel-loss-corrected couplings whose diagonals carry the extra
    /// in-transit degradation. `coupling_x` is labelled A-first, `coupling_y`
    /// B-first.
    pub fn with_explicit_coupling(
        graph: CompartmentGraph,
        params_a: ParameterSet,
        params_b: ParameterSet,
        coupling_x: DMatrix<f64>,
        coupling_y: DMatrix<f64>,
    ) -> Result<Self> {
        let mut model = NetworkModel::new(graph, params_a, params_b)?;
        let n = model.graph.len();
        if coupling_x.nrows() != n || coupling_y.nrows() != n {
            return Err(Error::Dimension {
                expected: n,
                got: coupling_x.nrows(),
                context: "coupling matrix",
            });
        }
        model.lap_a_first = coupling_x;
        model.lap_b_first = coupling_y;
        Ok(model)
    }

    /// Two-compartment model with the exact lumped channel correction: the
    /// attenuated edge weight off the diagonal and the end loss added to the
    /// diagonal.
    pub fn two_compartment_corrected(
        length: f64,
        width: f64,
        diffusivity: f64,
        params_a: ParameterSet,
        params_b: ParameterSet,
    ) -> Result<Self> {
        let graph = CompartmentGraph::two_compartment(
            length,
            crate::graph::ChannelWidth::Global(width),
            diffusivity,
        )?;
        let lumped = |decay: f64| {
            let e = crate::channel1d::corrected_edge(decay, diffusivity, length, width);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    -(e.transmit + e.end_loss),
                    e.transmit,
                    e.transmit,
                    -(e.transmit + e.end_loss),
                ],
            )
        };
        let coupling_x = lumped(params_a.ahl_decay);
        let coupling_y = lumped(params_b.ahl_decay);
        NetworkModel::with_explicit_coupling(graph, params_a, params_b, coupling_x, coupling_y)
    }

    pub fn laplacian_a_first(&self) -> &DMatrix<f64> {
        &self.lap_a_first
    }

    pub fn laplacian_b_first(&self) -> &DMatrix<f64> {
        &self.lap_b_first
    }

    /// All-zero state with a synthase seed in one A compartment. The seed
    /// breaks the exact A/B symmetry so the unstable homogeneous state can
    /// be left along a physical direction.
    pub fn seeded_state(&self, compartment: usize, seed: f64) -> Vec<f64> {
        let lay = self.layout;
        let mut y = vec![0.0; lay.dim()];
        y[lay.cell_a(compartment % lay.n_a) + 3] = seed;
        y
    }

    /// Network right-hand side on flat slices.
    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let lay = self.layout;
        let (n_a, n_b) = (lay.n_a, lay.n_b);

        let mut synthase_a = vec![0.0; n_a];
        let mut synthase_b = vec![0.0; n_b];
        for i in 0..n_a {
            synthase_a[i] = y[lay.cell_a(i) + 3];
        }
        for j in 0..n_b {
            synthase_b[j] = y[lay.cell_b(j) + 3];
        }

        for i in 0..n_a {
            let base = lay.cell_a(i);
            let cell = CellState::from_slice(&y[base..base + 4]);
            let d = cell_rhs_inner(&cell, y[lay.r_a(i)], &self.params_a);
            dy[base..base + 4].copy_from_slice(&d);
        }
        for j in 0..n_b {
            let base = lay.cell_b(j);
            let cell = CellState::from_slice(&y[base..base + 4]);
            let d = cell_rhs_inner(&cell, y[lay.r_b(j)], &self.params_b);
            dy[base..base + 4].copy_from_slice(&d);
        }

        // Transceiver for the A-produced species.
        {
            let x = lay.x_a(0);
            let (sender, rest) = y[x..x + n_a + 2 * n_b].split_at(n_a);
            let (receiver, complex) = rest.split_at(n_b);
            let out = &mut dy[x..x + n_a + 2 * n_b];
            let (d_sender, d_rest) = out.split_at_mut(n_a);
            let (d_receiver, d_complex) = d_rest.split_at_mut(n_b);
            rhs_inner(
                sender,
                receiver,
                complex,
                &synthase_a,
                &self.lap_a_first,
                &self.params_a,
                &self.params_b,
                d_sender,
                d_receiver,
                d_complex,
            );
        }
        // Mirror transceiver for the B-produced species.
        {
            let yb = lay.y_b(0);
            let (sender, rest) = y[yb..yb + n_b + 2 * n_a].split_at(n_b);
            let (receiver, complex) = rest.split_at(n_a);
            let out = &mut dy[yb..yb + n_b + 2 * n_a];
            let (d_sender, d_rest) = out.split_at_mut(n_b);
            let (d_receiver, d_complex) = d_rest.split_at_mut(n_a);
            rhs_inner(
                sender,
                receiver,
                complex,
                &synthase_b,
                &self.lap_b_first,
                &self.params_b,
                &self.params_a,
                d_sender,
                d_receiver,
                d_complex,
            );
        }
    }

    /// Checked right-hand side over a full state vector.
    pub fn network_rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.layout.dim() {
            return Err(Error::Dimension {
                expected: self.layout.dim(),
                got: y.len(),
                context: "network state",
            });
        }
        if y.iter().any(|&v| v < 0.0) {
            return Err(Error::domain("network state must be nonnegative"));
        }
        let mut dy = vec![0.0; y.len()];
        self.rhs(y, &mut dy);
        Ok(dy)
    }
}

/// [`OdeSystem`] adapter; projection keeps concentrations nonnegative and
/// complexes below their receptor totals.
pub struct NetworkSystem<'a> {
    pub model: &'a NetworkModel,
}

impl OdeSystem for NetworkSystem<'_> {
    fn dim(&self) -> usize {
        self.model.layout.dim()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        self.model.rhs(y, dy);
    }

    fn jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>) {
        *jac = crate::patterning::full_jacobian(self.model, y);
    }

    fn project(&self, y: &mut [f64]) -> f64 {
        let mut moved = 0.0;
        for v in y.iter_mut() {
            if *v < 0.0 {
                moved += -*v;
                *v = 0.0;
            }
        }
        let lay = self.model.layout;
        for j in 0..lay.n_b {
            let cap = self.model.params_b.receptor_total;
            let v = &mut y[lay.r_b(j)];
            if *v > cap {
                moved += *v - cap;
                *v = cap;
            }
        }
        for i in 0..lay.n_a {
            let cap = self.model.params_a.receptor_total;
            let v = &mut y[lay.r_a(i)];
            if *v > cap {
                moved += *v - cap;
                *v = cap;
            }
        }
        moved
    }
}

/// Integration controls with the documented defaults.
#[derive(Debug, Clone)]
pub struct SimulationControls {
    pub method: OdeMethod,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Horizon in seconds.
    pub t_end: f64,
    /// Sample spacing in seconds.
    pub sample_interval: f64,
    /// Steady-state detection; `None` integrates the full horizon.
    pub steady: Option<SteadyCriterion>,
}

impl SimulationControls {
    pub fn new(t_end: f64) -> Self {
        SimulationControls {
            method: OdeMethod::Rosenbrock,
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            t_end,
            sample_interval: 180.0,
            steady: Some(SteadyCriterion::default()),
        }
    }
}

/// A sampled network trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub layout: NetworkLayout,
    /// Sample times (s).
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// True when the steady criterion fired before the horizon.
    pub steady: bool,
    /// Total magnitude clamped by nonnegativity projection.
    pub projected: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has samples")
    }

    pub fn observable(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index]).collect()
    }
}

/// Integrates the network from `y0`.
pub fn integrate(model: &NetworkModel, y0: &[f64], controls: &SimulationControls) -> Result<Trajectory> {
    let sys = NetworkSystem { model };
    let opts = OdeOptions {
        method: controls.method,
        rel_tol: controls.rel_tol,
        abs_tol: controls.abs_tol,
        t_end: controls.t_end,
        sample_interval: controls.sample_interval,
        max_steps: 50_000_000,
        steady: controls.steady,
    };
    let sol = ode::integrate(&sys, y0, &opts)?;
    Ok(Trajectory {
        layout: model.layout,
        times: sol.times,
        states: sol.states,
        steady: sol.steady,
        projected: sol.projected,
    })
}

/// Exponential time constant of the final approach of one observable, in
/// hours. Fits `ln |obs - obs_end|` over the trailing segment where the
/// residual decays monotonically, down to one percent of that segment's
/// range; below that the approach is indistinguishable from settled and the
/// samples only carry the bias of the finite end value. Exact on a pure
/// exponential regardless of the window.
pub fn estimate_time_constant(traj: &Trajectory, observable: usize) -> Result<f64> {
    if !traj.steady {
        return Err(Error::NonConverged { t_end: *traj.times.last().unwrap_or(&0.0) });
    }
    let obs = traj.observable(observable);
    let n = obs.len();
    if n < 8 {
        return Err(Error::NoDecaySegment("too few samples".into()));
    }
    let target = obs[n - 1];
    let resid: Vec<f64> = obs[..n - 1].iter().map(|v| (v - target).abs()).collect();

    // Trailing monotone segment.
    let mut start = resid.len() - 1;
    while start > 0 && resid[start - 1] >= resid[start] {
        start -= 1;
    }
    let r_ref = resid[start];
    if r_ref <= 0.0 || !r_ref.is_finite() {
        return Err(Error::NoDecaySegment("observable is constant at the tail".into()));
    }

    let lo = 1e-2 * r_ref;
    let hi = r_ref;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for k in start..resid.len() {
        if resid[k] >= lo && resid[k] <= hi {
            ts.push(traj.times[k]);
            ys.push(resid[k].ln());
        }
    }
    if ts.len() < 4 {
        return Err(Error::NoDecaySegment(format!(
            "only {} usable samples in the decay window",
            ts.len()
        )));
    }
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::NoDecaySegment("residual does not decay".into()));
    }
    Ok(-1.0 / slope / 3600.0)
}

/// Sign pattern of the network ordering cone: +1 where the difference of an
/// ordered pair must be nonnegative, -1 where it must be nonpositive.
pub fn cone_signs(layout: &NetworkLayout) -> Vec<i8> {
    let mut signs = vec![0i8; layout.dim()];
    let cell_pattern = [1i8, 1, -1, -1];
    for i in 0..layout.n_a {
        for (k, s) in cell_pattern.iter().enumerate() {
            signs[layout.cell_a(i) + k] = *s;
        }
    }
    for j in 0..layout.n_b {
        for (k, s) in cell_pattern.iter().enumerate() {
            signs[layout.cell_b(j) + k] = -*s;
        }
    }
    let n = layout.n_a + layout.n_b;
    for k in 0..n + layout.n_b {
        signs[layout.x_a(0) + k] = -1;
    }
    for k in 0..n + layout.n_a {
        signs[layout.y_b(0) + k] = 1;
    }
    signs
}

/// Outcome of an order-preservation probe.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub pairs: usize,
    pub violations: usize,
    /// Worst signed violation seen, relative to the component scale.
    pub worst: f64,
}

/// Integrates pairs of cone-ordered initial states and checks that the
/// ordering persists at every sample. Pairs that are not ordered in the cone
/// are rejected up front.
pub fn monotonicity_probe(
    model: &NetworkModel,
    pairs: &[(Vec<f64>, Vec<f64>)],
    controls: &SimulationControls,
) -> Result<MonotonicityReport> {
    let signs = cone_signs(&model.layout);
    let dim = model.layout.dim();
    for (idx, (lo, hi)) in pairs.iter().enumerate() {
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::Dimension { expected: dim, got: lo.len(), context: "probe pair" });
        }
        for k in 0..dim {
            let delta = (hi[k] - lo[k]) * signs[k] as f64;
            if delta < 0.0 {
                return Err(Error::domain(format!(
                    "pair {idx} is not ordered in the network cone at component {k}"
                )));
            }
        }
    }

    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for (lo, hi) in pairs {
        let a = integrate(model, lo, controls)?;
        let b = integrate(model, hi, controls)?;
        let samples = a.states.len().min(b.states.len());
        let mut bad = false;
        for s in 0..samples {
            for k in 0..dim {
                let delta = (b.states[s][k] - a.states[s][k]) * signs[k] as f64;
                let scale = b.states[s][k].abs().max(a.states[s][k].abs()).max(1e-18);
                if delta < -1e-7 * scale {
                    bad = true;
                    worst = worst.max(-delta / scale);
                }
            }
        }
        if bad {
            violations += 1;
        }
    }
    Ok(MonotonicityReport { pairs: pairs.len(), violations, worst })
}
