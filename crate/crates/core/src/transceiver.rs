//! Signal transceivers: AHL production, diffusion and receptor binding.
//!
//! One transceiver covers one diffusible species end to end: production in
//! the sender compartments, Laplacian-coupled diffusion across the network,
//! and receptor binding in the receiver compartments. The mirror transceiver
//! for the other species is the same code with the compartment labeling
//! swapped (B-first Laplacian).
//!
//! State layout is always `[sender AHL | receiver AHL | receiver complex]`,
//! matching a Laplacian labelled senders-first.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kinetics::ParameterSet;
use crate::maps::ScalarMap;
use crate::ode::OdeSystem;

/// AHL and complex concentrations of one transceiver (M).
#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverState {
    /// AHL in the producing compartments.
    pub sender: Vec<f64>,
    /// AHL in the detecting compartments.
    pub receiver: Vec<f64>,
    /// Receptor–AHL complex in the detecting compartments.
    pub complex: Vec<f64>,
}

impl TransceiverState {
    pub fn zeros(n_sender: usize, n_receiver: usize) -> Self {
        TransceiverState {
            sender: vec![0.0; n_sender],
            receiver: vec![0.0; n_receiver],
            complex: vec![0.0; n_receiver],
        }
    }

    pub fn dim(&self) -> usize {
        self.sender.len() + 2 * self.receiver.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.sender);
        v.extend_from_slice(&self.receiver);
        v.extend_from_slice(&self.complex);
        v
    }

    pub fn from_flat(flat: &[f64], n_sender: usize, n_receiver: usize) -> Self {
        TransceiverState {
            sender: flat[..n_sender].to_vec(),
            receiver: flat[n_sender..n_sender + n_receiver].to_vec(),
            complex: flat[n_sender + n_receiver..n_sender + 2 * n_receiver].to_vec(),
        }
    }

    fn check_nonneg(&self, receptor_total: f64) -> Result<()> {
        let all = self.sender.iter().chain(&self.receiver).chain(&self.complex);
        for &v in all {
            if v < 0.0 {
                return Err(Error::domain("transceiver state must be nonnegative"));
            }
        }
        for &c in &self.complex {
            if c > receptor_total {
                return Err(Error::domain(format!(
                    "complex {c:.3e} M exceeds total receptor {receptor_total:.3e} M"
                )));
            }
        }
        Ok(())
    }
}

/// Raw derivatives; trusts dimensions and signs.
///
/// `gamma` is the species decay rate (sender-side chemistry); binding
/// constants come from the receiving side.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rhs_inner(
    sender: &[f64],
    receiver: &[f64],
    complex: &[f64],
    synthase: &[f64],
    laplacian: &DMatrix<f64>,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
    d_sender: &mut [f64],
    d_receiver: &mut [f64],
    d_complex: &mut [f64],
) {
    let n_s = sender.len();
    let n_r = receiver.len();
    let gamma = sender_p.ahl_decay;
    let lap_row = |row: usize| -> f64 {
        let mut acc = 0.0;
        for (j, &x) in sender.iter().enumerate() {
            acc += laplacian[(row, j)] * x;
        }
        for (j, &x) in receiver.iter().enumerate() {
            acc += laplacian[(row, n_s + j)] * x;
        }
        acc
    };
    for i in 0..n_s {
        d_sender[i] = sender_p.ahl_production * synthase[i] - gamma * sender[i] + lap_row(i);
    }
    for j in 0..n_r {
        let binding = receiver_p.k_on * receiver[j] * (receiver_p.receptor_total - complex[j])
            - receiver_p.k_off * complex[j];
        d_receiver[j] = -binding - gamma * receiver[j] + lap_row(n_s + j);
        d_complex[j] = binding;
    }
}

/// Time derivative of a transceiver driven by per-sender synthase levels.
pub fn transceiver_rhs(
    st: &TransceiverState,
    synthase: &[f64],
    laplacian: &DMatrix<f64>,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> Result<TransceiverState> {
    let n = st.sender.len() + st.receiver.len();
    if laplacian.nrows() != n || laplacian.ncols() != n {
        return Err(Error::Dimension { expected: n, got: laplacian.nrows(), context: "laplacian" });
    }
    if synthase.len() != st.sender.len() {
        return Err(Error::Dimension {
            expected: st.sender.len(),
            got: synthase.len(),
            context: "synthase input",
        });
    }
    st.check_nonneg(receiver_p.receptor_total)?;
    if synthase.iter().any(|&v| v < 0.0) {
        return Err(Error::domain("synthase input must be nonnegative"));
    }
    let mut out = TransceiverState::zeros(st.sender.len(), st.receiver.len());
    rhs_inner(
        &st.sender,
        &st.receiver,
        &st.complex,
        synthase,
        laplacian,
        sender_p,
        receiver_p,
        &mut out.sender,
        &mut out.receiver,
        &mut out.complex,
    );
    Ok(out)
}

/// Complex level implied by a free-AHL level at the receiver.
fn complex_from_receiver(ahl: f64, p: &ParameterSet) -> f64 {
    if ahl <= 0.0 {
        return 0.0;
    }
    p.receptor_total / (1.0 + (p.k_off / p.k_on) / ahl)
}

/// Steady state for constant synthase levels.
///
/// The AHL field solves `(-L + gamma I) x = [production; 0]`. The shifted
/// matrix is an irreducibly diagonally dominant M-matrix for `gamma > 0`, so
/// the solve cannot fail; the binding isotherm then gives the complex.
pub fn transceiver_steady_state(
    synthase: &[f64],
    laplacian: &DMatrix<f64>,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> Result<TransceiverState> {
    let n = laplacian.nrows();
    let n_s = synthase.len();
    if n_s > n {
        return Err(Error::Dimension { expected: n, got: n_s, context: "synthase input" });
    }
    if synthase.iter().any(|&v| v < 0.0) {
        return Err(Error::domain("synthase input must be nonnegative"));
    }
    let n_r = n - n_s;
    let gamma = sender_p.ahl_decay;
    assert!(gamma > 0.0, "species decay must be positive");

    let mut shifted = -laplacian.clone();
    for i in 0..n {
        shifted[(i, i)] += gamma;
    }
    let mut rhs = DVector::zeros(n);
    for i in 0..n_s {
        rhs[i] = sender_p.ahl_production * synthase[i];
    }
    let x = shifted
        .lu()
        .solve(&rhs)
        .expect("(-L + gamma I) is nonsingular for gamma > 0");

    let sender = (0..n_s).map(|i| x[i].max(0.0)).collect();
    let receiver: Vec<f64> = (0..n_r).map(|j| x[n_s + j].max(0.0)).collect();
    let complex = receiver.iter().map(|&v| complex_from_receiver(v, receiver_p)).collect();
    Ok(TransceiverState { sender, receiver, complex })
}

/// Scalar steady coupling map of an equitable network: complex level at any
/// receiver compartment as a function of the class-homogeneous synthase
/// level `z` of the senders.
pub fn coupling_response(
    z: f64,
    dbar_ab: f64,
    dbar_ba: f64,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> f64 {
    CouplingMap::new(dbar_ab, dbar_ba, sender_p, receiver_p).eval(z)
}

/// Analytic derivative of [`coupling_response`]; positive for `z > 0`.
pub fn coupling_response_slope(
    z: f64,
    dbar_ab: f64,
    dbar_ba: f64,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> f64 {
    CouplingMap::new(dbar_ab, dbar_ba, sender_p, receiver_p).slope(z)
}

/// The transceiver coupling map as a [`ScalarMap`]: `p_R * z / (z + c)`.
///
/// The half-saturation constant `c` collects binding, decay and the quotient
/// edge weights; it is the only place the geometry enters.
#[derive(Debug, Clone, Copy)]
pub struct CouplingMap {
    receptor_total: f64,
    half_const: f64,
}

impl CouplingMap {
    pub fn new(
        dbar_ab: f64,
        dbar_ba: f64,
        sender_p: &ParameterSet,
        receiver_p: &ParameterSet,
    ) -> Self {
        assert!(dbar_ab > 0.0 && dbar_ba > 0.0, "quotient weights must be positive");
        let gamma = sender_p.ahl_decay;
        let half_const = (receiver_p.k_off / receiver_p.k_on)
            * gamma
            * (gamma + dbar_ab + dbar_ba)
            / (dbar_ba * sender_p.ahl_production);
        CouplingMap { receptor_total: receiver_p.receptor_total, half_const }
    }

    pub fn symmetric(dbar_ab: f64, dbar_ba: f64, p: &ParameterSet) -> Self {
        CouplingMap::new(dbar_ab, dbar_ba, p, p)
    }

    /// Coupling map of the channel-loss-corrected two-compartment model:
    /// transmit conductance `s` between the ends, self conductance
    /// `gamma + s + loss` at each end.
    pub fn two_compartment_corrected(
        edge: crate::channel1d::CorrectedEdge,
        sender_p: &ParameterSet,
        receiver_p: &ParameterSet,
    ) -> Self {
        let gamma = sender_p.ahl_decay;
        let own = gamma + edge.transmit + edge.end_loss;
        let det = own * own - edge.transmit * edge.transmit;
        let half_const = (receiver_p.k_off / receiver_p.k_on) * det
            / (edge.transmit * sender_p.ahl_production);
        CouplingMap { receptor_total: receiver_p.receptor_total, half_const }
    }
}

impl ScalarMap for CouplingMap {
    fn eval(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        self.receptor_total * z / (z + self.half_const)
    }

    fn slope(&self, z: f64) -> f64 {
        let z = z.max(0.0);
        let denom = z + self.half_const;
        self.receptor_total * self.half_const / (denom * denom)
    }
}

/// Jacobian of the transceiver at a state, ordered `[AHL | complex]`.
pub fn transceiver_jacobian(
    st: &TransceiverState,
    laplacian: &DMatrix<f64>,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> DMatrix<f64> {
    let n_s = st.sender.len();
    let n_r = st.receiver.len();
    let n = n_s + n_r;
    let gamma = sender_p.ahl_decay;
    let mut jac = DMatrix::zeros(n + n_r, n + n_r);
    for i in 0..n {
        for j in 0..n {
            jac[(i, j)] = laplacian[(i, j)];
        }
        jac[(i, i)] -= gamma;
    }
    for j in 0..n_r {
        let free_receptor = receiver_p.k_on * (receiver_p.receptor_total - st.complex[j]);
        let unbind = receiver_p.k_on * st.receiver[j] + receiver_p.k_off;
        jac[(n_s + j, n_s + j)] -= free_receptor;
        jac[(n_s + j, n + j)] = unbind;
        jac[(n + j, n_s + j)] = free_receptor;
        jac[(n + j, n + j)] = -unbind;
    }
    jac
}

/// Input matrix of the linearized transceiver (production into senders).
pub fn transceiver_input_matrix(
    n_sender: usize,
    n_receiver: usize,
    sender_p: &ParameterSet,
) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n_sender + 2 * n_receiver, n_sender);
    for i in 0..n_sender {
        b[(i, i)] = sender_p.ahl_production;
    }
    b
}

/// Output matrix of the linearized transceiver (reads the complex block).
pub fn transceiver_output_matrix(n_sender: usize, n_receiver: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n_receiver, n_sender + 2 * n_receiver);
    for j in 0..n_receiver {
        c[(j, n_sender + n_receiver + j)] = 1.0;
    }
    c
}

/// Steady dc-gain matrix `-C A⁻¹ B` of the linearized transceiver.
pub fn dc_gain(
    st: &TransceiverState,
    laplacian: &DMatrix<f64>,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> Result<DMatrix<f64>> {
    let a = transceiver_jacobian(st, laplacian, sender_p, receiver_p);
    let b = transceiver_input_matrix(st.sender.len(), st.receiver.len(), sender_p);
    let c = transceiver_output_matrix(st.sender.len(), st.receiver.len());
    let a_inv_b = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Internal("transceiver Jacobian is singular".into()))?;
    Ok(-(&c * a_inv_b))
}

/// Quotient (3×3) linearization blocks at the class-homogeneous steady state
/// reached from synthase level `z`, and the scalar dc-gain they produce.
///
/// Returns `(a_bar, b_bar, c_bar, gain)` with `gain = -c_bar a_bar⁻¹ b_bar`,
/// which equals the analytic slope of the coupling map at `z`.
pub fn quotient_dc_gain(
    z: f64,
    dbar_ab: f64,
    dbar_ba: f64,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>, f64)> {
    let gamma = sender_p.ahl_decay;
    let det = gamma * (gamma + dbar_ab + dbar_ba);
    let x_receiver = dbar_ba * sender_p.ahl_production * z / det;
    let complex = complex_from_receiver(x_receiver, receiver_p);

    let free_receptor = receiver_p.k_on * (receiver_p.receptor_total - complex);
    let unbind = receiver_p.k_on * x_receiver + receiver_p.k_off;
    let a_bar = DMatrix::from_row_slice(
        3,
        3,
        &[
            -dbar_ab - gamma,
            dbar_ab,
            0.0,
            dbar_ba,
            -dbar_ba - gamma - free_receptor,
            unbind,
            0.0,
            free_receptor,
            -unbind,
        ],
    );
    let b_bar = DVector::from_column_slice(&[sender_p.ahl_production, 0.0, 0.0]);
    let c_bar = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
    let a_inv_b = a_bar
        .clone()
        .lu()
        .solve(&b_bar)
        .ok_or_else(|| Error::Internal("quotient transceiver matrix is singular".into()))?;
    let gain = -(&c_bar * a_inv_b)[(0, 0)];
    Ok((a_bar, b_bar, c_bar, gain))
}

/// One-norm matrix measure `mu_1(M)`: max over columns of the diagonal entry
/// plus the absolute off-diagonal column sum. Negativity certifies
/// contraction in the weighted one-norm.
pub fn one_norm_measure(m: &DMatrix<f64>) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for j in 0..m.ncols() {
        let mut col = m[(j, j)];
        for i in 0..m.nrows() {
            if i != j {
                col += m[(i, j)].abs();
            }
        }
        worst = worst.max(col);
    }
    worst
}

/// Contraction certificate for the transceiver at a feasible state.
///
/// Scales the complex block by the midpoint of the admissible weight
/// interval `(1, 1 + gamma / (k_on p_R))` and returns the one-norm measure
/// of the scaled Jacobian together with the weight used. The measure is
/// asserted negative; that holds for every state in the admissible set.
pub fn contraction_check(
    st: &TransceiverState,
    laplacian: &DMatrix<f64>,
    sender_p: &ParameterSet,
    receiver_p: &ParameterSet,
) -> Result<(f64, f64)> {
    st.check_nonneg(receiver_p.receptor_total)?;
    if st.complex.iter().any(|&c| c >= receiver_p.receptor_total) {
        return Err(Error::domain("complex must stay strictly below total receptor"));
    }
    let upper = 1.0 + sender_p.ahl_decay / (receiver_p.k_on * receiver_p.receptor_total);
    assert!(upper > 1.0, "admissible weight interval is empty");
    let k = 0.5 * (1.0 + upper);

    let n = st.sender.len() + st.receiver.len();
    let n_r = st.receiver.len();
    let mut jac = transceiver_jacobian(st, laplacian, sender_p, receiver_p);
    // D J D^{-1} with D = diag(1, ..., 1, k, ..., k).
    for i in n..n + n_r {
        for j in 0..n + n_r {
            jac[(i, j)] *= k;
        }
    }
    for j in n..n + n_r {
        for i in 0..n + n_r {
            jac[(i, j)] /= k;
        }
    }
    let measure = one_norm_measure(&jac);
    assert!(
        measure < 0.0,
        "transceiver contraction measure must be negative, got {measure:.6e}"
    );
    Ok((measure, k))
}

/// A transceiver with frozen synthase input, integrable as an [`OdeSystem`].
pub struct TransceiverSystem<'a> {
    pub laplacian: &'a DMatrix<f64>,
    pub synthase: Vec<f64>,
    pub sender_p: &'a ParameterSet,
    pub receiver_p: &'a ParameterSet,
}

impl TransceiverSystem<'_> {
    fn n_sender(&self) -> usize {
        self.synthase.len()
    }

    fn n_receiver(&self) -> usize {
        self.laplacian.nrows() - self.n_sender()
    }
}

impl OdeSystem for TransceiverSystem<'_> {
    fn dim(&self) -> usize {
        self.laplacian.nrows() + self.n_receiver()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let n_s = self.n_sender();
        let n_r = self.n_receiver();
        let (sender, rest) = y.split_at(n_s);
        let (receiver, complex) = rest.split_at(n_r);
        let (d_sender, d_rest) = dy.split_at_mut(n_s);
        let (d_receiver, d_complex) = d_rest.split_at_mut(n_r);
        rhs_inner(
            sender,
            receiver,
            complex,
            &self.synthase,
            self.laplacian,
            self.sender_p,
            self.receiver_p,
            d_sender,
            d_receiver,
            d_complex,
        );
    }

    fn jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>) {
        let st = TransceiverState::from_flat(y, self.n_sender(), self.n_receiver());
        *jac = transceiver_jacobian(&st, self.laplacian, self.sender_p, self.receiver_p);
    }

    fn project(&self, y: &mut [f64]) -> f64 {
        let mut moved = 0.0;
        for v in y.iter_mut() {
            if *v < 0.0 {
                moved += -*v;
                *v = 0.0;
            }
        }
        let cap = self.receiver_p.receptor_total;
        let n = self.laplacian.nrows();
        for v in y[n..].iter_mut() {
            if *v > cap {
                moved += *v - cap;
                *v = cap;
            }
        }
        moved
    }
}
