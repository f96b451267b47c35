//! One-dimensional reaction–diffusion channel model.
//!
//! The compartmental picture treats a channel as a single conductance; here
//! the channel is resolved into finite volumes so AHL degrades *along* the
//! channel. Both end compartments keep the full well-mixed circuit dynamics
//! and exchange flux with the boundary cells through half-spacing faces, so
//! with zero decay the discrete steady flux reduces exactly to the
//! compartmental edge weight `D/(l w)` irrespective of resolution.
//!
//! Stepping is backward Euler on everything linear (diffusion, decay, flux
//! coupling) plus the locally linearized binding terms, solved as one
//! tridiagonal system per species; the cell chains are slow and advance
//! explicitly with a midpoint update. The implicit default avoids tying the
//! step size to the diffusion CFL limit of the fine grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetics::{cell_rhs_inner, CellState, ParameterSet};
use crate::ode::SteadyCriterion;
use crate::simulate::{
    estimate_time_constant, integrate, NetworkLayout, NetworkModel, SimulationControls,
    Trajectory,
};

/// Tridiagonal solve (Thomas algorithm); diagonals are consumed as slices.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / m;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// End condition of a bare diffusion field.
#[derive(Debug, Clone, Copy)]
pub enum EndCondition {
    /// Zero flux.
    Sealed,
    /// Well-stirred reservoir at a fixed concentration, coupled through a
    /// half-spacing face.
    FixedConcentration(f64),
}

/// A bare diffusion–degradation field on a uniform grid, used to verify the
/// discretization against closed-form solutions.
#[derive(Debug, Clone)]
pub struct FieldProblem {
    pub dx: f64,
    pub diffusivity: f64,
    pub decay: f64,
    pub left: EndCondition,
    pub right: EndCondition,
}

impl FieldProblem {
    /// Diagonal contribution and constant inflow of one end face.
    fn end_terms(&self, end: EndCondition) -> (f64, f64) {
        match end {
            EndCondition::Sealed => (0.0, 0.0),
            EndCondition::FixedConcentration(c) => {
                let k = 2.0 * self.diffusivity / (self.dx * self.dx);
                (-k, k * c)
            }
        }
    }

    /// Backward-Euler step.
    pub fn step_implicit(&self, field: &mut [f64], dt: f64) {
        let n = field.len();
        let k = self.diffusivity / (self.dx * self.dx);
        let mut lower = vec![dt * k; n - 1];
        let mut upper = vec![dt * k; n - 1];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let mut neighbors = 0.0;
            if i > 0 {
                neighbors += k;
            }
            if i + 1 < n {
                neighbors += k;
            }
            diag[i] = 1.0 + dt * (neighbors + self.decay);
            rhs[i] = field[i];
        }
        let (d0, c0) = self.end_terms(self.left);
        diag[0] += dt * -d0;
        rhs[0] += dt * c0;
        let (d1, c1) = self.end_terms(self.right);
        diag[n - 1] += dt * -d1;
        rhs[n - 1] += dt * c1;

        for v in lower.iter_mut() {
            *v = -*v;
        }
        for v in upper.iter_mut() {
            *v = -*v;
        }
        let out = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        field.copy_from_slice(&out);
    }

    /// Forward-Euler step, rejected beyond the diffusion stability limit.
    pub fn step_explicit(&self, field: &mut [f64], dt: f64) -> Result<()> {
        let limit = self.dx * self.dx / (2.0 * self.diffusivity);
        if dt > limit {
            return Err(Error::CflViolation { dt, limit });
        }
        let n = field.len();
        let k = self.diffusivity / (self.dx * self.dx);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut lap = 0.0;
            if i > 0 {
                lap += k * (field[i - 1] - field[i]);
            }
            if i + 1 < n {
                lap += k * (field[i + 1] - field[i]);
            }
            if i == 0 || i == n - 1 {
                let (d, c) = self.end_terms(if i == 0 { self.left } else { self.right });
                lap += d * field[i] + c;
            }
            out[i] = field[i] + dt * (lap - self.decay * field[i]);
        }
        field.copy_from_slice(&out);
        Ok(())
    }

    /// Total field mass per unit cross-section (concentration × length).
    pub fn mass(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.dx
    }
}

/// Transmission attenuation of a steady diffusion–degradation channel: the
/// ratio of the flux arriving at the far end to the zero-decay flux,
/// `q / sinh(q)` with `q = l sqrt(decay / diffusivity)`. Multiplies the
/// compartmental edge weight to compensate for loss along the channel.
pub fn correction_factor(ahl_decay: f64, diffusivity: f64, length: f64) -> f64 {
    let q = length * (ahl_decay / diffusivity).sqrt();
    if q < 1e-6 {
        // sinh(q)/q = 1 + q^2/6 + O(q^4)
        return 1.0 / (1.0 + q * q / 6.0);
    }
    q / q.sinh()
}

/// Exact lumped equivalent of a steady diffusion–degradation channel seen
/// from its two ends: a transmit conductance (the attenuated edge weight)
/// plus an extra loss-to-degradation conductance at each end. Both reduce to
/// the plain edge weight and zero as the decay vanishes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorrectedEdge {
    /// Effective edge weight `d * q / sinh(q)` (s⁻¹).
    pub transmit: f64,
    /// Additional per-end loss `d * q (cosh(q) - 1) / sinh(q)` (s⁻¹).
    pub end_loss: f64,
}

/// Builds the lumped channel equivalent for an edge of weight
/// `d = diffusivity / (length * width)`.
pub fn corrected_edge(ahl_decay: f64, diffusivity: f64, length: f64, width: f64) -> CorrectedEdge {
    let d = diffusivity / (length * width);
    let q = length * (ahl_decay / diffusivity).sqrt();
    if q < 1e-6 {
        return CorrectedEdge { transmit: d / (1.0 + q * q / 6.0), end_loss: d * q * q / 2.0 };
    }
    let transmit = d * q / q.sinh();
    CorrectedEdge { transmit, end_loss: d * q * (q.cosh() - 1.0) / q.sinh() }
}

/// The coupled channel model: two full compartments joined by two resolved
/// diffusion fields, one per species.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub params_a: ParameterSet,
    pub params_b: ParameterSet,
    /// Channel length (m).
    pub length: f64,
    /// Channel width = compartment side (m).
    pub width: f64,
    /// Grid cells per species.
    pub cells: usize,
    pub diffusivity: f64,
}

/// State: the 14 compartment components in the network layout for one A and
/// one B compartment, plus both fields. Fields are stored sender-end first.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub comp: Vec<f64>,
    pub field_x: Vec<f64>,
    pub field_y: Vec<f64>,
}

/// Per-step mass-balance audit: relative residual of mass change against
/// production minus degradation, per species.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepAudit {
    pub residual_x: f64,
    pub residual_y: f64,
}

const LAYOUT: NetworkLayout = NetworkLayout { n_a: 1, n_b: 1 };

impl ChannelModel {
    pub fn new(
        params_a: ParameterSet,
        params_b: ParameterSet,
        length: f64,
        width: f64,
        cells: usize,
        diffusivity: f64,
    ) -> Result<Self> {
        params_a.validate()?;
        params_b.validate()?;
        if !(length > 0.0 && width > 0.0 && diffusivity > 0.0) {
            return Err(Error::domain("channel geometry must be positive"));
        }
        if cells < 50 {
            return Err(Error::domain("channel grid needs at least 50 cells"));
        }
        Ok(ChannelModel { params_a, params_b, length, width, cells, diffusivity })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn seeded_state(&self, seed: f64) -> ChannelState {
        let mut comp = vec![0.0; LAYOUT.dim()];
        comp[LAYOUT.cell_a(0) + 3] = seed;
        ChannelState { comp, field_x: vec![0.0; self.cells], field_y: vec![0.0; self.cells] }
    }

    /// One species: sender compartment AHL, the resolved field, the receiver
    /// compartment AHL and its complex, advanced together implicitly.
    ///
    /// Order in the tridiagonal system: `[sender, u_0 .. u_{m-1}, receiver,
    /// complex]`. Returns the mass residual of the step.
    #[allow(clippy::too_many_arguments)]
    fn step_species(
        &self,
        sender: &mut f64,
        field: &mut [f64],
        receiver: &mut f64,
        complex: &mut f64,
        production: f64,
        gamma: f64,
        receiver_p: &ParameterSet,
        dt: f64,
    ) -> f64 {
        let m = field.len();
        let n = m + 3;
        let dx = self.dx();
        let k_field = self.diffusivity / (dx * dx);
        // Compartment-channel exchange per compartment volume and per
        // boundary-cell volume.
        let k_comp = 2.0 * self.diffusivity / (self.width * dx);
        let k_cell = 2.0 * k_field;

        let mass_before = self.width * (*sender + *receiver + *complex)
            + dx * field.iter().sum::<f64>();

        let mut v = Vec::with_capacity(n);
        v.push(*sender);
        v.extend_from_slice(field);
        v.push(*receiver);
        v.push(*complex);
        let v_old = v.clone();

        // Two Newton iterations on the backward-Euler residual; only the
        // binding terms are nonlinear and they are merely bilinear.
        for _ in 0..2 {
            let mut lower = vec![0.0; n - 1];
            let mut diag = vec![0.0; n];
            let mut upper = vec![0.0; n - 1];
            let mut resid = vec![0.0; n];

            let rhs_at = |v: &[f64]| -> Vec<f64> {
                let mut f = vec![0.0; n];
                f[0] = production - gamma * v[0] - k_comp * (v[0] - v[1]);
                for i in 0..m {
                    let u = v[1 + i];
                    let mut acc = -gamma * u;
                    if i == 0 {
                        acc += k_cell * (v[0] - u);
                    } else {
                        acc += k_field * (v[i] - u);
                    }
                    if i == m - 1 {
                        acc += k_cell * (v[m + 1] - u);
                    } else {
                        acc += k_field * (v[2 + i] - u);
                    }
                    f[1 + i] = acc;
                }
                let recv = v[m + 1];
                let cplx = v[m + 2];
                let binding =
                    receiver_p.k_on * recv * (receiver_p.receptor_total - cplx)
                        - receiver_p.k_off * cplx;
                f[m + 1] = -gamma * recv - k_comp * (recv - v[m]) - binding;
                f[m + 2] = binding;
                f
            };

            let f = rhs_at(&v);
            for i in 0..n {
                resid[i] = v_old[i] - v[i] + dt * f[i];
            }

            // Jacobian of the backward-Euler map, I - dt J, tridiagonal.
            diag[0] = 1.0 + dt * (gamma + k_comp);
            upper[0] = -dt * k_comp;
            for i in 0..m {
                let row = 1 + i;
                let left = if i == 0 { k_cell } else { k_field };
                let right = if i == m - 1 { k_cell } else { k_field };
                diag[row] = 1.0 + dt * (gamma + left + right);
                lower[row - 1] = -dt * left;
                if row < n - 1 {
                    upper[row] = -dt * right;
                }
            }
            let recv = v[m + 1];
            let cplx = v[m + 2];
            let free = receiver_p.k_on * (receiver_p.receptor_total - cplx);
            let unbind = receiver_p.k_on * recv + receiver_p.k_off;
            diag[m + 1] = 1.0 + dt * (gamma + k_comp + free);
            lower[m] = -dt * k_comp;
            upper[m + 1] = -dt * unbind;
            diag[m + 2] = 1.0 + dt * unbind;
            lower[m + 1] = -dt * free;

            let delta = solve_tridiagonal(&lower, &diag, &upper, &resid);
            for i in 0..n {
                v[i] += delta[i];
            }
        }

        for x in v.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        *sender = v[0];
        field.copy_from_slice(&v[1..1 + m]);
        *receiver = v[m + 1];
        *complex = (v[m + 2]).min(receiver_p.receptor_total);

        let mass_after = self.width * (*sender + *receiver + *complex)
            + dx * field.iter().sum::<f64>();
        let degraded = gamma
            * (self.width * (*sender + *receiver) + dx * field.iter().sum::<f64>());
        let expected = dt * (self.width * production - degraded);
        let scale = mass_after.abs().max(mass_before.abs()).max(1e-300);
        ((mass_after - mass_before) - expected).abs() / scale
    }

    /// Advances the coupled model by `dt`: midpoint update of the two cell
    /// chains, then one implicit solve per species.
    pub fn step(&self, st: &mut ChannelState, dt: f64) -> StepAudit {
        let lay = LAYOUT;

        // Cell chains, explicit midpoint with frozen complex inputs.
        for (base, input, p) in [
            (lay.cell_a(0), st.comp[lay.r_a(0)], &self.params_a),
            (lay.cell_b(0), st.comp[lay.r_b(0)], &self.params_b),
        ] {
            let s0 = CellState::from_slice(&st.comp[base..base + 4]);
            let d0 = cell_rhs_inner(&s0, input, p);
            let mid = CellState::from_slice(&[
                s0.repressor_mrna + 0.5 * dt * d0[0],
                s0.repressor + 0.5 * dt * d0[1],
                s0.synthase_mrna + 0.5 * dt * d0[2],
                s0.synthase + 0.5 * dt * d0[3],
            ]);
            let dm = cell_rhs_inner(&mid, input, p);
            for k in 0..4 {
                st.comp[base + k] = (st.comp[base + k] + dt * dm[k]).max(0.0);
            }
        }

        let production_x = self.params_a.ahl_production * st.comp[lay.cell_a(0) + 3];
        let production_y = self.params_b.ahl_production * st.comp[lay.cell_b(0) + 3];

        let mut x_a = st.comp[lay.x_a(0)];
        let mut x_b = st.comp[lay.x_b(0)];
        let mut r_b = st.comp[lay.r_b(0)];
        let residual_x = self.step_species(
            &mut x_a,
            &mut st.field_x,
            &mut x_b,
            &mut r_b,
            production_x,
            self.params_a.ahl_decay,
            &self.params_b,
            dt,
        );
        st.comp[lay.x_a(0)] = x_a;
        st.comp[lay.x_b(0)] = x_b;
        st.comp[lay.r_b(0)] = r_b;

        let mut y_b = st.comp[lay.y_b(0)];
        let mut y_a = st.comp[lay.y_a(0)];
        let mut r_a = st.comp[lay.r_a(0)];
        let residual_y = self.step_species(
            &mut y_b,
            &mut st.field_y,
            &mut y_a,
            &mut r_a,
            production_y,
            self.params_b.ahl_decay,
            &self.params_a,
            dt,
        );
        st.comp[lay.y_b(0)] = y_b;
        st.comp[lay.y_a(0)] = y_a;
        st.comp[lay.r_a(0)] = r_a;

        StepAudit { residual_x, residual_y }
    }

    /// Maximum scaled derivative of the compartment states (s⁻¹), the same
    /// steadiness measure the network integrator uses.
    fn comp_rate(&self, prev: &[f64], next: &[f64], dt: f64, floor: f64) -> f64 {
        prev.iter()
            .zip(next)
            .map(|(a, b)| ((b - a) / dt).abs() / (b.abs() + floor))
            .fold(0.0, f64::max)
    }

    /// Runs the model to `t_end`, sampling compartment states; stops early
    /// once the steady criterion holds for its hold window.
    pub fn run(
        &self,
        mut st: ChannelState,
        t_end: f64,
        dt: f64,
        sample_interval: f64,
        steady: Option<SteadyCriterion>,
    ) -> Result<(Trajectory, ChannelState, f64)> {
        if !(dt > 0.0 && t_end > dt) {
            return Err(Error::domain("need 0 < dt < t_end"));
        }
        let mut times = vec![0.0];
        let mut states = vec![st.comp.clone()];
        let mut t = 0.0;
        let mut next_sample = sample_interval;
        let mut calm_since: Option<f64> = None;
        let mut is_steady = false;
        let mut worst_audit = 0.0f64;

        while t < t_end {
            let prev = st.comp.clone();
            let audit = self.step(&mut st, dt);
            worst_audit = worst_audit.max(audit.residual_x).max(audit.residual_y);
            t += dt;
            if t >= next_sample {
                times.push(t);
                states.push(st.comp.clone());
                next_sample += sample_interval;
            }
            if let Some(c) = &steady {
                if self.comp_rate(&prev, &st.comp, dt, c.floor) < c.rate_tol {
                    let since = *calm_since.get_or_insert(t);
                    if t - since >= c.hold {
                        is_steady = true;
                        break;
                    }
                } else {
                    calm_since = None;
                }
            }
        }
        if *times.last().unwrap() < t {
            times.push(t);
            states.push(st.comp.clone());
        }
        let traj = Trajectory {
            layout: LAYOUT,
            times,
            states,
            steady: is_steady,
            projected: 0.0,
        };
        Ok((traj, st, worst_audit))
    }

    /// Field snapshot in physical orientation: position (m) from the A end,
    /// with both species' concentrations.
    pub fn snapshot(&self, st: &ChannelState) -> Vec<(f64, f64, f64)> {
        let dx = self.dx();
        (0..self.cells)
            .map(|i| {
                let x = (i as f64 + 0.5) * dx;
                (x, st.field_x[i], st.field_y[self.cells - 1 - i])
            })
            .collect()
    }
}

/// Steady-state and dynamic comparison of the compartmental and channel
/// models at one geometry.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub patterned: bool,
    pub steady: bool,
    pub tau_hours: f64,
    /// The eight cell-chain states `[A then B] × [m_rep, rep, m_syn, syn]`.
    pub cell_states: [f64; 8],
    /// AHL and complex levels `[X_A, X_B, R_B, Y_B, Y_A, R_A]`.
    pub signal_states: [f64; 6],
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub length: f64,
    pub correction: f64,
    pub ode: ModelSummary,
    pub pde: ModelSummary,
    /// Worst relative difference across the eight cell-chain states — the
    /// pattern observables of the comparison.
    pub cell_state_rel_diff: f64,
    /// Relative differences of the raw AHL/complex levels, reported for
    /// context; the lumped correction does not reproduce these levels.
    pub signal_rel_diff: [f64; 6],
    pub tau_ratio: f64,
    pub both_patterned: bool,
    /// Final channel profile: position from the A end (m) and both species'
    /// concentrations (M), for CSV export.
    pub pde_profile: Vec<(f64, f64, f64)>,
}

/// Controls for [`compare_models`].
#[derive(Debug, Clone)]
pub struct CompareControls {
    pub cells: usize,
    /// Channel-model step (s).
    pub dt: f64,
    /// Horizon (s).
    pub t_end: f64,
    /// Width factor: width = length / factor.
    pub width_factor: f64,
    pub seed: f64,
    /// Synthase ratio separating patterned from homogeneous outcomes.
    pub contrast_threshold: f64,
}

impl Default for CompareControls {
    fn default() -> Self {
        CompareControls {
            cells: 128,
            dt: 5.0,
            t_end: 400.0 * 3600.0,
            width_factor: 1.0,
            seed: 1e-12,
            contrast_threshold: 5.0,
        }
    }
}

fn summarize(traj: &Trajectory, contrast_threshold: f64) -> Result<ModelSummary> {
    let lay = LAYOUT;
    let f = traj.final_state();
    let syn_a = f[lay.cell_a(0) + 3];
    let syn_b = f[lay.cell_b(0) + 3];
    let patterned = syn_a.max(syn_b) / syn_a.min(syn_b).max(1e-300) > contrast_threshold;
    // Time constant of the dominant reporter complex.
    let observable = if f[lay.r_b(0)] >= f[lay.r_a(0)] { lay.r_b(0) } else { lay.r_a(0) };
    let tau_hours = estimate_time_constant(traj, observable)?;
    let mut cell_states = [0.0; 8];
    for k in 0..4 {
        cell_states[k] = f[lay.cell_a(0) + k];
        cell_states[4 + k] = f[lay.cell_b(0) + k];
    }
    let signal_states = [
        f[lay.x_a(0)],
        f[lay.x_b(0)],
        f[lay.r_b(0)],
        f[lay.y_b(0)],
        f[lay.y_a(0)],
        f[lay.r_a(0)],
    ];
    Ok(ModelSummary { patterned, steady: traj.steady, tau_hours, cell_states, signal_states })
}

/// Runs the corrected compartmental model and the resolved channel model on
/// the same scenario and reports steady-state and time-constant agreement.
pub fn compare_models(
    params_a: &ParameterSet,
    params_b: &ParameterSet,
    length: f64,
    controls: &CompareControls,
) -> Result<ComparisonReport> {
    let width = length / controls.width_factor;
    let diffusivity = 4.9e-10;
    let correction = correction_factor(params_a.ahl_decay, diffusivity, length);

    // Corrected compartmental model: attenuated edge weight plus the matched
    // end loss, the exact lumped equivalent of the steady channel.
    let model = NetworkModel::two_compartment_corrected(
        length,
        width,
        diffusivity,
        params_a.clone(),
        params_b.clone(),
    )?;
    let mut sim = SimulationControls::new(controls.t_end);
    sim.sample_interval = 0.05 * 3600.0;
    let ode_traj = integrate(&model, &model.seeded_state(0, controls.seed), &sim)?;
    if !ode_traj.steady {
        return Err(Error::NonConverged { t_end: controls.t_end });
    }

    let channel = ChannelModel::new(
        params_a.clone(),
        params_b.clone(),
        length,
        width,
        controls.cells,
        diffusivity,
    )?;
    let (pde_traj, pde_final, _) = channel.run(
        channel.seeded_state(controls.seed),
        controls.t_end,
        controls.dt,
        0.05 * 3600.0,
        Some(SteadyCriterion::default()),
    )?;
    if !pde_traj.steady {
        return Err(Error::NonConverged { t_end: controls.t_end });
    }

    let ode = summarize(&ode_traj, controls.contrast_threshold)?;
    let pde = summarize(&pde_traj, controls.contrast_threshold)?;

    let mut cell_state_rel_diff = 0.0f64;
    for k in 0..8 {
        let (a, b) = (ode.cell_states[k], pde.cell_states[k]);
        cell_state_rel_diff = cell_state_rel_diff.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
    }
    let mut signal_rel_diff = [0.0; 6];
    for k in 0..6 {
        let (a, b) = (ode.signal_states[k], pde.signal_states[k]);
        signal_rel_diff[k] = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    }
    let tau_ratio = pde.tau_hours / ode.tau_hours;
    let both_patterned = ode.patterned && pde.patterned;

    Ok(ComparisonReport {
        length,
        correction,
        ode,
        pde,
        cell_state_rel_diff,
        signal_rel_diff,
        tau_ratio,
        both_patterned,
        pde_profile: channel.snapshot(&pde_final),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::assert_rel;

    #[test]
    fn sealed_channel_conserves_mass_without_decay() {
        let problem = FieldProblem {
            dx: 1e-5,
            diffusivity: 4.9e-10,
            decay: 0.0,
            left: EndCondition::Sealed,
            right: EndCondition::Sealed,
        };
        let n = 64;
        let mut field: Vec<f64> = (0..n)
            .map(|i| 1e-9 * (1.0 + (i as f64 * 0.37).sin().abs()))
            .collect();
        let m0 = problem.mass(&field);
        for _ in 0..10_000 {
            problem.step_implicit(&mut field, 0.5);
        }
        let m1 = problem.mass(&field);
        assert!(
            (m1 - m0).abs() / m0 < 1e-10,
            "mass drifted by {:.3e}",
            (m1 - m0).abs() / m0
        );
        // Diffusion flattens the profile.
        let spread = field.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - field.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(spread < 1e-12);
    }

    #[test]
    fn uniform_sealed_field_decays_at_the_decay_rate() {
        let decay = 7.7e-4;
        let problem = FieldProblem {
            dx: 1e-5,
            diffusivity: 4.9e-10,
            decay,
            left: EndCondition::Sealed,
            right: EndCondition::Sealed,
        };
        let mut field = vec![2e-9; 40];
        let dt = 0.25;
        problem.step_implicit(&mut field, dt);
        // One backward-Euler step of a uniform field: exact division.
        for v in &field {
            assert_rel(*v, 2e-9 / (1.0 + decay * dt), 1e-13);
        }
        // Many small steps track the continuous exponential.
        let mut field = vec![2e-9; 40];
        let t_end = 2000.0;
        let dt = 0.05;
        let steps = (t_end / dt) as usize;
        for _ in 0..steps {
            problem.step_implicit(&mut field, dt);
        }
        assert_rel(field[17], 2e-9 * (-decay * t_end).exp(), 1e-4);
    }

    #[test]
    fn steady_profile_matches_the_analytic_boundary_value_solution() {
        let (diffusivity, decay) = (4.9e-10, 7.7e-4);
        let length = 500e-6;
        let cells = 100;
        let dx = length / cells as f64;
        let u0 = 3e-9;
        let problem = FieldProblem {
            dx,
            diffusivity,
            decay,
            left: EndCondition::FixedConcentration(u0),
            right: EndCondition::Sealed,
        };
        let mut field = vec![0.0; cells];
        for _ in 0..40_000 {
            problem.step_implicit(&mut field, 1.0);
        }
        let lambda = (decay / diffusivity).sqrt();
        for (i, v) in field.iter().enumerate() {
            let x = (i as f64 + 0.5) * dx;
            let exact = u0 * (lambda * (length - x)).cosh() / (lambda * length).cosh();
            assert!(
                ((v - exact) / exact).abs() < 1e-3,
                "cell {i}: {v:.6e} vs {exact:.6e}"
            );
        }
    }

    #[test]
    fn explicit_stepping_rejects_cfl_violations() {
        let problem = FieldProblem {
            dx: 1e-5,
            diffusivity: 4.9e-10,
            decay: 0.0,
            left: EndCondition::Sealed,
            right: EndCondition::Sealed,
        };
        let mut field = vec![1e-9; 30];
        let limit = 1e-10 / (2.0 * 4.9e-10);
        assert!(problem.step_explicit(&mut field, limit * 0.9).is_ok());
        let err = problem.step_explicit(&mut field, limit * 1.5).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn explicit_and_implicit_agree_at_small_steps() {
        let problem = FieldProblem {
            dx: 1e-5,
            diffusivity: 4.9e-10,
            decay: 1e-4,
            left: EndCondition::FixedConcentration(1e-9),
            right: EndCondition::Sealed,
        };
        let mut a: Vec<f64> = (0..40).map(|i| 1e-10 * i as f64).collect();
        let mut b = a.clone();
        let dt = 0.02;
        for _ in 0..2000 {
            problem.step_implicit(&mut a, dt);
            problem.step_explicit(&mut b, dt).unwrap();
        }
        for (x, y) in a.iter().zip(&b) {
            assert_rel(*x, *y, 1e-3);
        }
    }

    #[test]
    fn correction_factor_limits_and_monotonicity() {
        let d = 4.9e-10;
        // Vanishing decay: no attenuation.
        assert!((correction_factor(1e-15, d, 1e-3) - 1.0).abs() < 1e-6);
        assert!(correction_factor(7.7e-4, d, 1e-9) > 0.999_999);
        // Strictly decreasing in length.
        let mut prev = 1.0;
        for l in [1e-4, 5e-4, 1e-3, 2e-3, 3e-3, 5e-3] {
            let f = correction_factor(7.7e-4, d, l);
            assert!(f < prev && f > 0.0, "not decreasing at {l}");
            prev = f;
        }
        // Closed form at the nominal scenario.
        let q = 500e-6 * (7.7e-4f64 / d).sqrt();
        assert_rel(correction_factor(7.7e-4, d, 500e-6), q / q.sinh(), 1e-12);
    }

    #[test]
    fn channel_step_audit_is_tiny() {
        let p = ParameterSet::default();
        let model =
            ChannelModel::new(p.clone(), p, 500e-6, 500e-6, 64, 4.9e-10).unwrap();
        let mut st = model.seeded_state(1e-12);
        // Put the state somewhere non-trivial first.
        for _ in 0..200 {
            model.step(&mut st, 5.0);
        }
        for _ in 0..50 {
            let audit = model.step(&mut st, 5.0);
            assert!(audit.residual_x < 1e-8, "x residual {:.3e}", audit.residual_x);
            assert!(audit.residual_y < 1e-8, "y residual {:.3e}", audit.residual_y);
        }
    }

    #[test]
    fn grid_refinement_changes_the_steady_state_marginally() {
        let p = ParameterSet::default();
        let mut finals = Vec::new();
        for cells in [64usize, 128] {
            let model =
                ChannelModel::new(p.clone(), p.clone(), 500e-6, 500e-6, cells, 4.9e-10).unwrap();
            let (traj, _, _) = model
                .run(
                    model.seeded_state(1e-12),
                    400.0 * 3600.0,
                    5.0,
                    360.0,
                    Some(SteadyCriterion::default()),
                )
                .unwrap();
            assert!(traj.steady);
            finals.push(traj.final_state().to_vec());
        }
        for k in 0..LAYOUT.dim() {
            let (a, b) = (finals[0][k], finals[1][k]);
            if a.abs().max(b.abs()) > 1e-300 {
                assert!(
                    (a - b).abs() / a.abs().max(b.abs()) < 5e-3,
                    "component {k}: {a:.5e} vs {b:.5e}"
                );
            }
        }
    }

    #[test]
    fn snapshot_orients_both_fields_along_the_channel() {
        let p = ParameterSet::default();
        let model = ChannelModel::new(p.clone(), p, 500e-6, 500e-6, 64, 4.9e-10).unwrap();
        let mut st = model.seeded_state(1e-12);
        for _ in 0..22_000 {
            model.step(&mut st, 20.0);
        }
        let snap = model.snapshot(&st);
        assert_eq!(snap.len(), 64);
        // Species X decays away from its source at the A end; Y mirrors it.
        assert!(snap[0].1 > snap[63].1);
        assert!(snap[63].2 > snap[0].2);
        assert!(snap.windows(2).all(|w| w[1].0 > w[0].0));
    }

    fn quick_controls() -> CompareControls {
        CompareControls { cells: 80, dt: 10.0, ..CompareControls::default() }
    }

    #[test]
    fn nominal_comparison_matches_within_tolerances() {
        let p = ParameterSet::default();
        let report = compare_models(&p, &p, 500e-6, &quick_controls()).unwrap();
        assert!(report.both_patterned, "both models should pattern");
        assert!(
            report.cell_state_rel_diff < 0.10,
            "cell states differ by {:.3}",
            report.cell_state_rel_diff
        );
        assert!(
            report.tau_ratio > 0.6 && report.tau_ratio < 1.2,
            "tau ratio {:.3}",
            report.tau_ratio
        );
    }

    #[test]
    fn corrected_model_tracks_the_channel_across_lengths() {
        let p = ParameterSet::default();
        for length in [1e-3, 2e-3, 3e-3] {
            let report = compare_models(&p, &p, length, &quick_controls()).unwrap();
            assert!(
                report.cell_state_rel_diff < 0.10,
                "length {length}: diff {:.3}",
                report.cell_state_rel_diff
            );
        }
    }

    #[test]
    fn mismatch_shrinks_with_the_channel() {
        let p = ParameterSet::default();
        let mut diffs = Vec::new();
        for length in [2e-3, 1e-3, 0.5e-3] {
            let report = compare_models(&p, &p, length, &quick_controls()).unwrap();
            diffs.push(report.cell_state_rel_diff);
        }
        assert!(diffs[2] <= diffs[0], "diffs {diffs:?}");
    }
}
