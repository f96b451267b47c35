//! Bundled verification suite behind the `validate` subcommand: quotient
//! eigenvalue structure, slope/eigenvalue concordance, transceiver
//! contraction, and the compartmental-vs-channel comparison, emitted as one
//! machine-readable report.

use serde::Serialize;

use crate::channel1d::{compare_models, CompareControls};
use crate::config::ValidateConfig;
use crate::error::Result;
use crate::graph::ChannelWidth;
use crate::kinetics::ParameterSet;
use crate::patterning::{
    assemble_steady_state, find_fixed_points, full_jacobian, spectral_abscissa,
    verify_quotient_eigenvalue, PatternMap, MARGINAL_BAND,
};
use crate::simulate::NetworkModel;
use crate::transceiver::{contraction_check, TransceiverState};
use crate::util::SplitMix64;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub skipped: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: true, skipped: false, detail }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: false, skipped: false, detail }
    }

    fn skip(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: true, skipped: true, detail }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    /// Channel profile of the model comparison, when it ran.
    #[serde(skip)]
    pub channel_profile: Vec<(f64, f64, f64)>,
}

impl ValidationReport {
    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

fn quotient_check(model: &NetworkModel, cfg: &ValidateConfig) -> CheckResult {
    let name = "quotient_eigenvalue";
    let pair = match model.graph.check_equitable(1e-9) {
        Ok(p) => p,
        Err(e) => return CheckResult::skip(name, format!("skipped: {e}")),
    };
    let map = PatternMap::new(&model.params_a, &model.params_b, pair.dbar_ab, pair.dbar_ba);
    let report = match find_fixed_points(&map, None) {
        Ok(r) => r,
        Err(e) => return CheckResult::fail(name, e.to_string()),
    };
    let near = &report.points[report.near_homogeneous];
    match verify_quotient_eigenvalue(model, near.z_a, near.z_b, cfg.quotient_tol) {
        Ok(check) if check.passed => CheckResult::pass(
            name,
            format!(
                "quotient value {:.6e}, eigenvector residual {:.3e}, spectral radius {:.6e}",
                check.quotient_value, check.eigenvector_residual, check.spectral_radius
            ),
        ),
        Ok(check) => CheckResult::fail(
            name,
            format!(
                "residual {:.3e} (tol {:.1e}), dominant: {}",
                check.eigenvector_residual, cfg.quotient_tol, check.is_dominant
            ),
        ),
        Err(e) => CheckResult::fail(name, e.to_string()),
    }
}

fn concordance_check(model: &NetworkModel, cfg: &ValidateConfig, seed: u64) -> CheckResult {
    let name = "slope_eigenvalue_concordance";
    let mut rng = SplitMix64::new(seed ^ 0x5eed_c0de);
    let mut tested = 0usize;
    for draw in 0..cfg.concordance_draws {
        let mut params = model.params_a.clone();
        perturb(&mut params, &mut rng, 0.5);
        let pair = match model.graph.check_equitable(1e-9) {
            Ok(p) => p,
            Err(e) => return CheckResult::skip(name, format!("skipped: {e}")),
        };
        let trial = match NetworkModel::new(
            model.graph.clone(),
            params.clone(),
            params.clone(),
        ) {
            Ok(m) => m,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        let map = PatternMap::new(&params, &params, pair.dbar_ab, pair.dbar_ba);
        let report = match find_fixed_points(&map, None) {
            Ok(r) => r,
            Err(e) => return CheckResult::fail(name, format!("draw {draw}: {e}")),
        };
        for pt in &report.points {
            if (pt.slope - 1.0).abs() <= MARGINAL_BAND {
                continue;
            }
            let y = match assemble_steady_state(&trial, pt.z_a, pt.z_b) {
                Ok(y) => y,
                Err(e) => return CheckResult::fail(name, format!("draw {draw}: {e}")),
            };
            let alpha = spectral_abscissa(&full_jacobian(&trial, &y));
            if (pt.slope > 1.0) != (alpha > 0.0) {
                return CheckResult::fail(
                    name,
                    format!(
                        "draw {draw}: slope {:.6e} vs spectral abscissa {alpha:.6e} at z_a {:.6e}",
                        pt.slope, pt.z_a
                    ),
                );
            }
            tested += 1;
        }
    }
    CheckResult::pass(
        name,
        format!("{tested} fixed points across {} draws agree", cfg.concordance_draws),
    )
}

fn contraction_samples_check(model: &NetworkModel, cfg: &ValidateConfig, seed: u64) -> CheckResult {
    let name = "transceiver_contraction";
    let mut rng = SplitMix64::new(seed ^ 0xc0ff_ee11);
    let lay = model.layout;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cfg.contraction_samples {
        let st = TransceiverState {
            sender: (0..lay.n_a).map(|_| rng.log_uniform(1e-12, 1e-5)).collect(),
            receiver: (0..lay.n_b).map(|_| rng.log_uniform(1e-12, 1e-5)).collect(),
            complex: (0..lay.n_b)
                .map(|_| rng.uniform(0.0, 0.999) * model.params_b.receptor_total)
                .collect(),
        };
        match contraction_check(
            &st,
            model.laplacian_a_first(),
            &model.params_a,
            &model.params_b,
        ) {
            Ok((measure, _)) => worst = worst.max(measure),
            Err(e) => return CheckResult::fail(name, e.to_string()),
        }
    }
    if worst < 0.0 {
        CheckResult::pass(
            name,
            format!("measure < 0 at {} random states (worst {worst:.3e})", cfg.contraction_samples),
        )
    } else {
        CheckResult::fail(name, format!("nonnegative measure {worst:.3e}"))
    }
}

fn comparison_check(
    model: &NetworkModel,
    cfg: &ValidateConfig,
    profile: &mut Vec<(f64, f64, f64)>,
) -> CheckResult {
    let name = "channel_model_comparison";
    // The comparison runs on the two-compartment reduction; take the length
    // from the configured graph when it is a single channel.
    let (length, width_factor) = match (model.graph.edges(), model.graph.width()) {
        ([edge], ChannelWidth::LengthFactor(k)) => (edge.length, k),
        ([edge], ChannelWidth::Global(w)) => (edge.length, edge.length / w),
        _ => (500e-6, 1.0),
    };
    let controls = CompareControls {
        cells: cfg.compare_cells,
        dt: cfg.compare_dt_s,
        width_factor,
        ..CompareControls::default()
    };
    match compare_models(&model.params_a, &model.params_b, length, &controls) {
        Ok(report) => {
            *profile = report.pde_profile.clone();
            let (lo, hi) = cfg.compare_tau_ratio;
            let ok = report.ode.patterned == report.pde.patterned
                && report.cell_state_rel_diff < cfg.compare_state_tol
                && report.tau_ratio > lo
                && report.tau_ratio < hi;
            let detail = format!(
                "cell-state diff {:.3e}, tau ratio {:.3} (ode {:.1} h, pde {:.1} h), patterned {}/{}",
                report.cell_state_rel_diff,
                report.tau_ratio,
                report.ode.tau_hours,
                report.pde.tau_hours,
                report.ode.patterned,
                report.pde.patterned
            );
            if ok {
                CheckResult::pass(name, detail)
            } else {
                CheckResult::fail(name, detail)
            }
        }
        Err(e) => CheckResult::fail(name, e.to_string()),
    }
}

/// Multiplies every continuous parameter by a uniform factor in
/// `[1-span, 1+span]`, clamping the Hill exponents at one.
pub fn perturb(params: &mut ParameterSet, rng: &mut SplitMix64, span: f64) {
    let mut scale = |v: &mut f64| *v *= rng.uniform(1.0 - span, 1.0 + span);
    scale(&mut params.k_on);
    scale(&mut params.k_off);
    scale(&mut params.receptor_total);
    scale(&mut params.act_promoter_velocity);
    scale(&mut params.act_promoter_copies);
    scale(&mut params.act_half_conc);
    scale(&mut params.act_hill);
    scale(&mut params.act_leak);
    scale(&mut params.rep_promoter_velocity);
    scale(&mut params.rep_promoter_copies);
    scale(&mut params.rep_half_conc);
    scale(&mut params.rep_hill);
    scale(&mut params.rep_leak);
    scale(&mut params.molecule_conc);
    scale(&mut params.repressor_mrna_decay);
    scale(&mut params.repressor_decay);
    scale(&mut params.synthase_mrna_decay);
    scale(&mut params.synthase_decay);
    scale(&mut params.repressor_translation);
    scale(&mut params.synthase_translation);
    scale(&mut params.ahl_decay);
    scale(&mut params.ahl_production);
    params.act_hill = params.act_hill.max(1.0);
    params.rep_hill = params.rep_hill.max(1.0);
}

/// Runs the full suite on a configured network.
pub fn run_validation(model: &NetworkModel, cfg: &ValidateConfig, seed: u64) -> Result<ValidationReport> {
    let mut channel_profile = Vec::new();
    let checks = vec![
        quotient_check(model, cfg),
        concordance_check(model, cfg, seed),
        contraction_samples_check(model, cfg, seed),
        comparison_check(model, cfg, &mut channel_profile),
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport {
        schema_version: crate::config::SCHEMA_VERSION,
        seed,
        checks,
        passed,
        channel_profile,
    })
}
