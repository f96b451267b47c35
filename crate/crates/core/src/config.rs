//! Experiment configuration: one JSON file drives every subcommand.
//!
//! Units at the boundary follow the CLI conventions: lengths in micrometers
//! (fields suffixed `_um`) or millimeters (`_mm`), times in hours
//! (`_hours`), concentrations in molar (`_molar` or the parameter-set
//! fields, which are SI throughout). Unknown keys are rejected.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{CellClass, Channel, ChannelWidth, Compartment, CompartmentGraph};
use crate::kinetics::ParameterSet;
use crate::ode::OdeMethod;
use crate::sweep::SweepSpec;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub graph: GraphConfig,
    /// Parameters for the A-type circuit and its species; defaults embed the
    /// nominal table.
    #[serde(default)]
    pub parameters: ParameterSet,
    /// Optional second set for the B side; defaults to the A side.
    #[serde(default)]
    pub parameters_b: Option<ParameterSet>,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.parameters.validate()?;
        if let Some(pb) = &self.parameters_b {
            pb.validate()?;
        }
        self.graph.check()?;
        self.simulate.check()?;
        Ok(())
    }

    pub fn params_a(&self) -> ParameterSet {
        self.parameters.clone()
    }

    pub fn params_b(&self) -> ParameterSet {
        self.parameters_b.clone().unwrap_or_else(|| self.parameters.clone())
    }

    pub fn to_graph(&self) -> Result<CompartmentGraph> {
        self.graph.to_graph()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub vertices: Vec<VertexConfig>,
    pub edges: Vec<EdgeConfig>,
    /// Global channel width in micrometers; exclusive with `width_factor`.
    #[serde(default)]
    pub width_um: Option<f64>,
    /// Per-edge width as length / factor; the default when neither is given
    /// is a factor of 1.
    #[serde(default)]
    pub width_factor: Option<f64>,
    #[serde(default = "default_diffusivity")]
    pub diffusivity_m2_per_s: f64,
}

fn default_diffusivity() -> f64 {
    4.9e-10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexConfig {
    pub id: String,
    pub class: CellClass,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub i: String,
    pub j: String,
    pub length_um: f64,
}

impl GraphConfig {
    fn check(&self) -> Result<()> {
        if self.width_um.is_some() && self.width_factor.is_some() {
            return Err(Error::Config(
                "specify either width_um or width_factor, not both".into(),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> ChannelWidth {
        match (self.width_um, self.width_factor) {
            (Some(w), _) => ChannelWidth::Global(w * 1e-6),
            (None, Some(k)) => ChannelWidth::LengthFactor(k),
            (None, None) => ChannelWidth::LengthFactor(1.0),
        }
    }

    pub fn to_graph(&self) -> Result<CompartmentGraph> {
        self.check()?;
        let vertices: Vec<Compartment> = self
            .vertices
            .iter()
            .map(|v| Compartment { id: v.id.clone(), class: v.class })
            .collect();
        let index_of = |id: &str| -> Result<usize> {
            vertices
                .iter()
                .position(|v| v.id == id)
                .ok_or_else(|| Error::Config(format!("edge references unknown compartment '{id}'")))
        };
        let edges = self
            .edges
            .iter()
            .map(|e| {
                Ok(Channel { a: index_of(&e.i)?, b: index_of(&e.j)?, length: e.length_um * 1e-6 })
            })
            .collect::<Result<Vec<_>>>()?;
        CompartmentGraph::new(vertices, edges, self.width(), self.diffusivity_m2_per_s)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub equitability_tol: f64,
    /// Upper search bracket override (M).
    pub z_max_molar: Option<f64>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig { equitability_tol: 1e-9, z_max_molar: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodConfig {
    /// Semi-implicit Rosenbrock, the default.
    Stiff,
    /// Explicit Dormand–Prince; practical only for short horizons here.
    Explicit,
}

impl From<MethodConfig> for OdeMethod {
    fn from(m: MethodConfig) -> OdeMethod {
        match m {
            MethodConfig::Stiff => OdeMethod::Rosenbrock,
            MethodConfig::Explicit => OdeMethod::DormandPrince,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t_end_hours: f64,
    pub sample_interval_hours: f64,
    pub rel_tol: f64,
    pub abs_tol_molar: f64,
    pub method: MethodConfig,
    /// Synthase seed placed in one A compartment to break symmetry.
    pub seed_synthase_molar: f64,
    pub steady_detection: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            t_end_hours: 400.0,
            sample_interval_hours: 0.05,
            rel_tol: 1e-8,
            abs_tol_molar: 1e-14,
            method: MethodConfig::Stiff,
            seed_synthase_molar: 1e-12,
            steady_detection: true,
        }
    }
}

impl SimulateConfig {
    fn check(&self) -> Result<()> {
        if !(self.t_end_hours > 0.0 && self.sample_interval_hours > 0.0) {
            return Err(Error::Config("simulation times must be positive".into()));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol_molar > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.seed_synthase_molar >= 0.0) {
            return Err(Error::Config("seed level must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn controls(&self) -> crate::simulate::SimulationControls {
        crate::simulate::SimulationControls {
            method: self.method.into(),
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol_molar,
            t_end: self.t_end_hours * 3600.0,
            sample_interval: self.sample_interval_hours * 3600.0,
            steady: if self.steady_detection {
                Some(crate::ode::SteadyCriterion::default())
            } else {
                None
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub receptor_min_molar: f64,
    pub receptor_max_molar: f64,
    pub receptor_points: usize,
    pub length_min_mm: f64,
    pub length_max_mm: f64,
    pub length_points: usize,
    pub length_log: bool,
    pub channel_loss_correction: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            receptor_min_molar: 1e-10,
            receptor_max_molar: 1e-4,
            receptor_points: 64,
            length_min_mm: 0.1,
            length_max_mm: 6.0,
            length_points: 64,
            length_log: false,
            channel_loss_correction: false,
        }
    }
}

impl SweepConfig {
    /// Sweep geometry inherits the graph's width convention and diffusivity.
    pub fn spec(&self, graph: &GraphConfig) -> Result<SweepSpec> {
        let width_factor = match graph.width() {
            ChannelWidth::LengthFactor(k) => k,
            ChannelWidth::Global(_) => {
                return Err(Error::Config(
                    "the sweep varies channel length; use width_factor in the graph".into(),
                ))
            }
        };
        Ok(SweepSpec {
            receptor_min: self.receptor_min_molar,
            receptor_max: self.receptor_max_molar,
            receptor_points: self.receptor_points,
            length_min: self.length_min_mm * 1e-3,
            length_max: self.length_max_mm * 1e-3,
            length_points: self.length_points,
            length_log: self.length_log,
            width_factor,
            diffusivity: graph.diffusivity_m2_per_s,
            channel_loss_correction: self.channel_loss_correction,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Random parameter draws for the slope/eigenvalue concordance check.
    pub concordance_draws: usize,
    /// Random feasible states for the contraction certificate.
    pub contraction_samples: usize,
    /// Residual tolerance of the quotient eigenvalue check.
    pub quotient_tol: f64,
    /// Channel model resolution for the model comparison.
    pub compare_cells: usize,
    /// Channel model step (s).
    pub compare_dt_s: f64,
    /// Worst allowed relative difference of the cell states.
    pub compare_state_tol: f64,
    /// Allowed time-constant ratio interval.
    pub compare_tau_ratio: (f64, f64),
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            concordance_draws: 50,
            contraction_samples: 100,
            quotient_tol: 1e-10,
            compare_cells: 128,
            compare_dt_s: 5.0,
            compare_state_tol: 0.10,
            compare_tau_ratio: (0.6, 1.2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "graph": {
            "vertices": [
                {"id": "A1", "class": "A"},
                {"id": "B1", "class": "B"}
            ],
            "edges": [{"i": "A1", "j": "B1", "length_um": 500.0}]
        }
    }"#;

    #[test]
    fn minimal_config_uses_the_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.schema_version, 1);
        assert_eq!(cfg.parameters, ParameterSet::default());
        let g = cfg.to_graph().unwrap();
        assert_eq!(g.len(), 2);
        let l = g.laplacian().unwrap();
        assert!((l[(0, 1)] - 1.96e-3).abs() < 1e-12);
        assert_eq!(cfg.simulate.t_end_hours, 400.0);
        assert_eq!(cfg.sweep.receptor_points, 64);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let bad = MINIMAL.replace("\"graph\"", "\"bogus\": 1, \"graph\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad_inner = MINIMAL.replace("\"length_um\": 500.0", "\"length_um\": 500.0, \"x\": 1");
        assert!(ExperimentConfig::from_json(&bad_inner).is_err());
    }

    #[test]
    fn unit_conversions_apply() {
        let text = r#"{
            "graph": {
                "vertices": [
                    {"id": "A1", "class": "A"},
                    {"id": "B1", "class": "B"}
                ],
                "edges": [{"i": "A1", "j": "B1", "length_um": 1000.0}],
                "width_um": 1000.0
            },
            "simulate": {"t_end_hours": 2.0}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let g = cfg.to_graph().unwrap();
        let l = g.laplacian().unwrap();
        assert!((l[(0, 1)] - 4.9e-4).abs() < 1e-12);
        assert_eq!(cfg.simulate.controls().t_end, 7200.0);
    }

    #[test]
    fn parameter_overrides_merge_with_the_defaults() {
        let text = MINIMAL.replace(
            "\"graph\"",
            "\"parameters\": {\"receptor_total\": 1e-12}, \"graph\"",
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.parameters.receptor_total, 1e-12);
        assert_eq!(cfg.parameters.k_on, 1e9);
        assert_eq!(cfg.params_b().receptor_total, 1e-12);
    }

    #[test]
    fn contradictory_width_settings_fail() {
        let text = MINIMAL.replace(
            "\"edges\"",
            "\"width_um\": 100.0, \"width_factor\": 2.0, \"edges\"",
        );
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn unknown_vertex_reference_fails() {
        let text = MINIMAL.replace("\"j\": \"B1\"", "\"j\": \"B9\"");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert!(cfg.to_graph().is_err());
    }

    #[test]
    fn bad_schema_version_fails() {
        let text = MINIMAL.replace("{\n        \"graph\"", "{\"schema_version\": 9, \"graph\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn sweep_spec_requires_a_width_factor() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let spec = cfg.sweep.spec(&cfg.graph).unwrap();
        assert_eq!(spec.width_factor, 1.0);
        let fixed = r#"{
            "graph": {
                "vertices": [
                    {"id": "A1", "class": "A"},
                    {"id": "B1", "class": "B"}
                ],
                "edges": [{"i": "A1", "j": "B1", "length_um": 500.0}],
                "width_um": 500.0
            }
        }"#;
        let cfg = ExperimentConfig::from_json(fixed).unwrap();
        assert!(cfg.sweep.spec(&cfg.graph).is_err());
    }
}
