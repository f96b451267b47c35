//! Inhibitory gene-circuit kinetics.
//!
//! Each compartment hosts one cell type running the same four-state circuit:
//! a receiver complex activates transcription of a repressor (TetR), and the
//! repressor shuts down the promoter of the AHL synthase (LuxI or BviI). The
//! module provides the ODE right-hand side of that chain together with its
//! closed-form static response map and analytic slope.
//!
//! Units are SI throughout: seconds for time, molar for concentrations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::ScalarMap;

/// All rate constants of the circuit and its transceiver, in s and M.
///
/// Defaults reproduce the nominal simulation parameter set. The constitutive
/// receptor concentration (`receptor_total`) and the channel geometry are the
/// experimentally tunable knobs; everything else is fixed chemistry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParameterSet {
    /// Binding rate between receptor and AHL (s⁻¹ M⁻¹).
    pub k_on: f64,
    /// Dissociation rate of the receptor–AHL complex (s⁻¹).
    pub k_off: f64,
    /// Constitutive concentration of total receptor, bound plus free (M).
    pub receptor_total: f64,
    /// Velocity of the complex-activated promoter driving the repressor (s⁻¹).
    pub act_promoter_velocity: f64,
    /// Copy number of the activated promoter.
    pub act_promoter_copies: f64,
    /// Dissociation constant of the complex at the activated promoter (M).
    pub act_half_conc: f64,
    /// Cooperativity of complex activation.
    pub act_hill: f64,
    /// Leakage of the activated promoter.
    pub act_leak: f64,
    /// Velocity of the repressor-controlled promoter driving the synthase (s⁻¹).
    pub rep_promoter_velocity: f64,
    /// Copy number of the repressed promoter.
    pub rep_promoter_copies: f64,
    /// Dissociation constant of the repressor at its promoter (M).
    pub rep_half_conc: f64,
    /// Cooperativity of repression.
    pub rep_hill: f64,
    /// Leakage of the repressed promoter.
    pub rep_leak: f64,
    /// Concentration contributed by a single molecule in a cell (M).
    pub molecule_conc: f64,
    /// Degradation rate of repressor mRNA (s⁻¹).
    pub repressor_mrna_decay: f64,
    /// Degradation rate of repressor protein (s⁻¹).
    pub repressor_decay: f64,
    /// Degradation rate of synthase mRNA (s⁻¹).
    pub synthase_mrna_decay: f64,
    /// Degradation rate of synthase protein (s⁻¹).
    pub synthase_decay: f64,
    /// Translation rate of the repressor (s⁻¹).
    pub repressor_translation: f64,
    /// Translation rate of the synthase (s⁻¹).
    pub synthase_translation: f64,
    /// Degradation rate of AHL (s⁻¹).
    pub ahl_decay: f64,
    /// AHL generation rate per synthase molecule (s⁻¹).
    pub ahl_production: f64,
}

impl Default for ParameterSet {
    fn default() -> Self {
        ParameterSet {
            k_on: 1e9,
            k_off: 50.0,
            receptor_total: 5e-7,
            act_promoter_velocity: 0.26,
            act_promoter_copies: 5.0,
            act_half_conc: 1.5e-9,
            act_hill: 2.0,
            act_leak: 1.0 / 167.0,
            rep_promoter_velocity: 0.3,
            rep_promoter_copies: 5.0,
            rep_half_conc: 1.786e-10,
            rep_hill: 2.0,
            rep_leak: 1.0 / 5050.0,
            molecule_conc: 1.5e-9,
            repressor_mrna_decay: 5.78e-3,
            repressor_decay: 2.89e-4,
            synthase_mrna_decay: 5.78e-3,
            synthase_decay: 1.16e-3,
            repressor_translation: 6.224e-6,
            synthase_translation: 2.655e-5,
            ahl_decay: 7.70e-4,
            ahl_production: 0.0135,
        }
    }
}

impl ParameterSet {
    /// Checks positivity, cooperativity and leakage constraints.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_on", self.k_on),
            ("k_off", self.k_off),
            ("receptor_total", self.receptor_total),
            ("act_promoter_velocity", self.act_promoter_velocity),
            ("act_promoter_copies", self.act_promoter_copies),
            ("act_half_conc", self.act_half_conc),
            ("rep_promoter_velocity", self.rep_promoter_velocity),
            ("rep_promoter_copies", self.rep_promoter_copies),
            ("rep_half_conc", self.rep_half_conc),
            ("molecule_conc", self.molecule_conc),
            ("repressor_mrna_decay", self.repressor_mrna_decay),
            ("repressor_decay", self.repressor_decay),
            ("synthase_mrna_decay", self.synthase_mrna_decay),
            ("synthase_decay", self.synthase_decay),
            ("repressor_translation", self.repressor_translation),
            ("synthase_translation", self.synthase_translation),
            ("ahl_decay", self.ahl_decay),
            ("ahl_production", self.ahl_production),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {value}")));
            }
        }
        if self.act_hill < 1.0 || self.rep_hill < 1.0 {
            return Err(Error::domain("Hill coefficients must be >= 1"));
        }
        for (name, leak) in [("act_leak", self.act_leak), ("rep_leak", self.rep_leak)] {
            if !(leak > 0.0 && leak < 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1), got {leak}")));
            }
        }
        Ok(())
    }

    /// Synthase chain gain: steady synthase per unit of open repressed promoter (M).
    ///
    /// Recomputed on every call so it can never go stale against the raw rates.
    pub fn synthase_gain(&self) -> f64 {
        (self.synthase_translation / self.synthase_decay)
            * (self.rep_promoter_velocity * self.rep_promoter_copies * self.molecule_conc
                / self.synthase_mrna_decay)
    }

    /// Repressor chain gain: steady repressor per unit of active promoter (M).
    pub fn repressor_gain(&self) -> f64 {
        (self.repressor_translation / self.repressor_decay)
            * (self.act_promoter_velocity * self.act_promoter_copies * self.molecule_conc
                / self.repressor_mrna_decay)
    }
}

/// mRNA and protein concentrations of one cell (M).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellState {
    pub repressor_mrna: f64,
    pub repressor: f64,
    pub synthase_mrna: f64,
    pub synthase: f64,
}

impl CellState {
    pub fn as_array(&self) -> [f64; 4] {
        [self.repressor_mrna, self.repressor, self.synthase_mrna, self.synthase]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        CellState {
            repressor_mrna: s[0],
            repressor: s[1],
            synthase_mrna: s[2],
            synthase: s[3],
        }
    }
}

/// Activating Hill term, defined as 0 at zero input (its continuous limit).
#[inline]
pub(crate) fn activation(input: f64, half: f64, hill: f64) -> f64 {
    if input <= 0.0 {
        return 0.0;
    }
    let x = (input / half).powf(hill);
    x / (1.0 + x)
}

/// Derivative of [`activation`] with respect to the input.
#[inline]
pub(crate) fn activation_slope(input: f64, half: f64, hill: f64) -> f64 {
    if input <= 0.0 {
        // Limit: 0 for hill > 1, 1/half for hill == 1.
        return if hill > 1.0 { 0.0 } else { 1.0 / half };
    }
    let x = input / half;
    let xn = x.powf(hill);
    hill * xn / (input * (1.0 + xn) * (1.0 + xn))
}

/// Repressing Hill term.
#[inline]
pub(crate) fn repression(input: f64, half: f64, hill: f64) -> f64 {
    if input <= 0.0 {
        return 1.0;
    }
    let x = (input / half).powf(hill);
    1.0 / (1.0 + x)
}

/// Derivative of [`repression`] with respect to the input.
#[inline]
pub(crate) fn repression_slope(input: f64, half: f64, hill: f64) -> f64 {
    if input <= 0.0 {
        return if hill > 1.0 { 0.0 } else { -1.0 / half };
    }
    let x = input / half;
    let xn = x.powf(hill);
    -hill * xn / (input * (1.0 + xn) * (1.0 + xn))
}

/// Four derivatives of the inhibitory chain, no input validation; the
/// checked wrapper is [`cell_rhs`].
#[inline]
pub fn cell_rhs_inner(s: &CellState, complex_input: f64, p: &ParameterSet) -> [f64; 4] {
    let act = activation(complex_input, p.act_half_conc, p.act_hill);
    let d_rep_mrna = p.act_promoter_velocity * p.act_promoter_copies * p.molecule_conc
        * (act + p.act_leak)
        - p.repressor_mrna_decay * s.repressor_mrna;
    let d_rep = p.repressor_translation * s.repressor_mrna - p.repressor_decay * s.repressor;
    let rep = repression(s.repressor, p.rep_half_conc, p.rep_hill);
    let d_syn_mrna = p.rep_promoter_velocity * p.rep_promoter_copies * p.molecule_conc
        * (rep + p.rep_leak)
        - p.synthase_mrna_decay * s.synthase_mrna;
    let d_syn = p.synthase_translation * s.synthase_mrna - p.synthase_decay * s.synthase;
    [d_rep_mrna, d_rep, d_syn_mrna, d_syn]
}

/// Time derivative of one cell given the receiver-complex concentration.
pub fn cell_rhs(s: &CellState, complex_input: f64, p: &ParameterSet) -> Result<CellState> {
    if complex_input < 0.0 {
        return Err(Error::domain(format!(
            "complex input must be nonnegative, got {complex_input}"
        )));
    }
    let arr = s.as_array();
    if arr.iter().any(|&v| v < 0.0) {
        return Err(Error::domain("cell state must be componentwise nonnegative"));
    }
    let d = cell_rhs_inner(s, complex_input, p);
    Ok(CellState::from_slice(&d))
}

/// Full steady state of the chain under a constant complex input.
pub fn cell_steady_state(complex_input: f64, p: &ParameterSet) -> CellState {
    let act = activation(complex_input, p.act_half_conc, p.act_hill);
    let repressor_mrna = p.act_promoter_velocity * p.act_promoter_copies * p.molecule_conc
        * (act + p.act_leak)
        / p.repressor_mrna_decay;
    let repressor = p.repressor_translation * repressor_mrna / p.repressor_decay;
    let rep = repression(repressor, p.rep_half_conc, p.rep_hill);
    let synthase_mrna = p.rep_promoter_velocity * p.rep_promoter_copies * p.molecule_conc
        * (rep + p.rep_leak)
        / p.synthase_mrna_decay;
    let synthase = p.synthase_translation * synthase_mrna / p.synthase_decay;
    CellState { repressor_mrna, repressor, synthase_mrna, synthase }
}

/// Closed-form static response: steady synthase concentration for a constant
/// receiver-complex input. Strictly decreasing, bounded above by
/// `synthase_gain * (1 + rep_leak)`.
pub fn synthase_response(complex_input: f64, p: &ParameterSet) -> f64 {
    let act = activation(complex_input, p.act_half_conc, p.act_hill);
    let repressor = p.repressor_gain() * (act + p.act_leak);
    let rep = repression(repressor, p.rep_half_conc, p.rep_hill);
    p.synthase_gain() * (rep + p.rep_leak)
}

/// Analytic derivative of [`synthase_response`]; negative for all inputs > 0.
pub fn synthase_response_slope(complex_input: f64, p: &ParameterSet) -> f64 {
    let act = activation(complex_input, p.act_half_conc, p.act_hill);
    let act_d = activation_slope(complex_input, p.act_half_conc, p.act_hill);
    let gain = p.repressor_gain();
    let repressor = gain * (act + p.act_leak);
    let rep_d = repression_slope(repressor, p.rep_half_conc, p.rep_hill);
    p.synthase_gain() * rep_d * gain * act_d
}

/// Jacobian of the cell chain at a state: lower triangular, diagonal the
/// negated decay rates, one off-diagonal entry for the repression coupling.
pub fn cell_jacobian(s: &CellState, p: &ParameterSet) -> [[f64; 4]; 4] {
    let rep_coupling = p.rep_promoter_velocity
        * p.rep_promoter_copies
        * p.molecule_conc
        * repression_slope(s.repressor, p.rep_half_conc, p.rep_hill);
    [
        [-p.repressor_mrna_decay, 0.0, 0.0, 0.0],
        [p.repressor_translation, -p.repressor_decay, 0.0, 0.0],
        [0.0, rep_coupling, -p.synthase_mrna_decay, 0.0],
        [0.0, 0.0, p.synthase_translation, -p.synthase_decay],
    ]
}

/// Sensitivity of repressor-mRNA production to the complex input; the only
/// nonzero entry of the cell's input vector.
pub fn cell_input_gain(complex_input: f64, p: &ParameterSet) -> f64 {
    p.act_promoter_velocity
        * p.act_promoter_copies
        * p.molecule_conc
        * activation_slope(complex_input, p.act_half_conc, p.act_hill)
}

/// The cell's static response as a [`ScalarMap`].
#[derive(Debug, Clone)]
pub struct CellMap {
    params: ParameterSet,
}

impl CellMap {
    pub fn new(params: ParameterSet) -> Self {
        CellMap { params }
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }
}

impl ScalarMap for CellMap {
    fn eval(&self, z: f64) -> f64 {
        synthase_response(z, &self.params)
    }

    fn slope(&self, z: f64) -> f64 {
        synthase_response_slope(z, &self.params)
    }
}
