//! Analysis and simulation of compartmental lateral-inhibition gene networks.
//!
//! Colonies of two cell types sit in compartments connected by diffusion
//! channels. Each type secretes an AHL signal that the other type detects,
//! and detection represses the detector's own signal production. This crate
//! predicts whether a given network geometry and parameter set settles into a
//! contrasting (patterned) steady state, verifies the prediction against full
//! ODE simulation and Jacobian spectra, and cross-checks the compartmental
//! model against a one-dimensional reaction–diffusion channel model.
//!
//! The workflow mirrors the CLI subcommands:
//!
//! * [`patterning`] — reduce an equitable network to a scalar fixed-point
//!   problem, locate all fixed points and classify their stability;
//! * [`simulate`] — integrate the full network ODE and measure time constants;
//! * [`sweep`] — classify patterning over a (receptor, channel-length) grid;
//! * [`channel1d`] — finite-difference channel model and the degradation
//!   correction factor for the compartmental approximation.

pub mod channel1d;
pub mod config;
pub mod error;
pub mod graph;
pub mod ode;
pub mod patterning;
pub mod simulate;
pub mod sweep;
pub mod transceiver;
pub mod kinetics;
pub mod maps;
pub mod testutil;
pub mod util;
pub mod validate;

pub use error::{Error, Result};
pub use kinetics::{CellState, ParameterSet};
