//! Command-line front end: analyze / simulate / sweep / validate.
//!
//! Every subcommand takes one JSON config file. Lengths at this boundary are
//! micrometers or millimeters, times are hours, concentrations molar.
//! Exit codes: 0 success, 1 configuration or runtime error, 2 network not
//! equitable (analyze), 3 simulation did not converge.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use lateral_inhibition::config::{ExperimentConfig, SCHEMA_VERSION};
use lateral_inhibition::error::Error;
use lateral_inhibition::patterning::{
    classify_patterning, find_fixed_points, FixedPoint, PatternMap, PatternOutcome,
};
use lateral_inhibition::simulate::{estimate_time_constant, integrate, NetworkModel, Trajectory};
use lateral_inhibition::sweep::{run_sweep, Execution, SweepGrid};
use lateral_inhibition::validate::run_validation;

#[derive(Parser)]
#[command(name = "lateral-inhibition", version, about = "Compartmental lateral-inhibition analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for randomized checks and the symmetry-breaking choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed points and patterning classification of the reduced maps.
    Analyze { config: PathBuf },
    /// Full network ODE simulation with trajectory export.
    Simulate { config: PathBuf },
    /// Patterning classification over a (receptor, length) grid.
    Sweep { config: PathBuf },
    /// Quotient-eigenvalue, concordance, contraction and channel checks.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = lateral_inhibition::sweep::configure_thread_pool(n) {
            eprintln!("warning: {e}");
        }
    }
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotEquitable { .. } => 2,
                Error::NonConverged { .. } => 3,
                _ => 1,
            }
        }
    };
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    fs::create_dir_all(&cli.out_dir)
        .map_err(|e| Error::Config(format!("cannot create out dir: {e}")))?;
    match &cli.command {
        Command::Analyze { config } => cmd_analyze(&load(config)?, &cli.out_dir),
        Command::Simulate { config } => cmd_simulate(&load(config)?, cli.seed, &cli.out_dir),
        Command::Sweep { config } => cmd_sweep(&load(config)?, &cli.out_dir),
        Command::Validate { config } => cmd_validate(&load(config)?, cli.seed, &cli.out_dir),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Error> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize {name}: {e}")))?;
    fs::write(&path, text + "\n")
        .map_err(|e| Error::Config(format!("write {}: {e}", path.display())))?;
    Ok(path)
}

#[derive(Serialize)]
struct AnalyzeOutput {
    schema_version: u32,
    outcome: PatternOutcome,
    marginal: bool,
    dbar_ab: f64,
    dbar_ba: f64,
    bracket: (f64, f64),
    points: Vec<FixedPoint>,
}

fn cmd_analyze(cfg: &ExperimentConfig, out_dir: &Path) -> Result<u8, Error> {
    let graph = cfg.to_graph()?;
    let pair = graph.check_equitable(cfg.analyze.equitability_tol)?;
    let map = PatternMap::new(&cfg.params_a(), &cfg.params_b(), pair.dbar_ab, pair.dbar_ba);
    let report = find_fixed_points(&map, cfg.analyze.z_max_molar)?;
    let outcome = classify_patterning(&report);

    let output = AnalyzeOutput {
        schema_version: SCHEMA_VERSION,
        outcome,
        marginal: report.marginal,
        dbar_ab: pair.dbar_ab,
        dbar_ba: pair.dbar_ba,
        bracket: report.bracket,
        points: report.points.clone(),
    };
    let path = write_json(out_dir, "fixed_points.json", &output)?;

    println!(
        "network: {} compartments, quotient weights {:.4e} / {:.4e} s^-1",
        graph.len(),
        pair.dbar_ab,
        pair.dbar_ba
    );
    println!("{} fixed point(s) in [0, {:.3e}] M:", report.points.len(), report.bracket.1);
    for pt in &report.points {
        println!(
            "  z_a = {:.6e} M, z_b = {:.6e} M, slope = {:.6e} ({:?})",
            pt.z_a, pt.z_b, pt.slope, pt.label
        );
    }
    let verdict = match outcome {
        PatternOutcome::Patterned => "patterned",
        PatternOutcome::Homogeneous if report.marginal => "homogeneous (marginal slope)",
        PatternOutcome::Homogeneous => "homogeneous",
    };
    println!("classification: {verdict}");
    println!("wrote {}", path.display());
    Ok(0)
}

#[derive(Serialize)]
struct SimulateSummary {
    schema_version: u32,
    steady: bool,
    t_final_hours: f64,
    seeded_compartment: String,
    winner: String,
    synthase_contrast: f64,
    time_constant_hours: Option<f64>,
    projected_mass: f64,
    finals: Vec<(String, f64)>,
}

fn write_trajectory_csv(
    dir: &Path,
    traj: &Trajectory,
    labels: &[String],
) -> Result<PathBuf, Error> {
    let path = dir.join("trajectory.csv");
    let file =
        fs::File::create(&path).map_err(|e| Error::Config(format!("create csv: {e}")))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Config(format!("write csv: {e}"));
    write!(w, "time_hours").map_err(io_err)?;
    for label in labels {
        write!(w, ",{label}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        write!(w, "{}", t / 3600.0).map_err(io_err)?;
        for v in state {
            write!(w, ",{v}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    Ok(path)
}

fn cmd_simulate(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<u8, Error> {
    let graph = cfg.to_graph()?;
    let model = NetworkModel::new(graph, cfg.params_a(), cfg.params_b())?;
    let lay = model.layout;

    // The seed picks which A compartment carries the symmetry-breaking bump.
    let seeded = (seed % lay.n_a as u64) as usize;
    let y0 = model.seeded_state(seeded, cfg.simulate.seed_synthase_molar);
    let traj = integrate(&model, &y0, &cfg.simulate.controls())?;

    let labels = lay.labels(&model.graph);
    let csv_path = write_trajectory_csv(out_dir, &traj, &labels)?;

    let f = traj.final_state();
    let mut best_a = (0usize, f64::NEG_INFINITY);
    for i in 0..lay.n_a {
        let v = f[lay.cell_a(i) + 3];
        if v > best_a.1 {
            best_a = (i, v);
        }
    }
    let mut best_b = (0usize, f64::NEG_INFINITY);
    for j in 0..lay.n_b {
        let v = f[lay.cell_b(j) + 3];
        if v > best_b.1 {
            best_b = (j, v);
        }
    }
    let (winner, win_level) = if best_a.1 >= best_b.1 {
        (model.graph.vertices()[best_a.0].id.clone(), best_a.1)
    } else {
        (model.graph.vertices()[lay.n_a + best_b.0].id.clone(), best_b.1)
    };
    let contrast = win_level / best_a.1.min(best_b.1).max(1e-300);

    // Reporter complex with the larger final value carries the fit.
    let tau_obs = if f[lay.r_b(0)] >= f[lay.r_a(0)] { lay.r_b(0) } else { lay.r_a(0) };
    let tau = estimate_time_constant(&traj, tau_obs).ok();

    let summary = SimulateSummary {
        schema_version: SCHEMA_VERSION,
        steady: traj.steady,
        t_final_hours: traj.times.last().unwrap() / 3600.0,
        seeded_compartment: model.graph.vertices()[seeded].id.clone(),
        winner,
        synthase_contrast: contrast,
        time_constant_hours: tau,
        projected_mass: traj.projected,
        finals: labels.iter().cloned().zip(f.iter().copied()).collect(),
    };
    let json_path = write_json(out_dir, "simulate_summary.json", &summary)?;

    println!(
        "simulated {:.1} h ({} samples), steady: {}",
        summary.t_final_hours,
        traj.times.len(),
        traj.steady
    );
    println!("winner {} with synthase contrast {:.2}", summary.winner, contrast);
    if let Some(tau) = tau {
        println!("time constant {tau:.2} h");
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    if !traj.steady {
        eprintln!("simulation did not reach steady state; extend t_end_hours");
        return Ok(3);
    }
    Ok(0)
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    schema_version: u32,
    #[serde(flatten)]
    grid: &'a SweepGrid,
}

fn write_sweep_csv(dir: &Path, grid: &SweepGrid) -> Result<PathBuf, Error> {
    let path = dir.join("sweep.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Config(format!("create csv: {e}")))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Config(format!("write csv: {e}"));
    write!(w, "l12_mm").map_err(io_err)?;
    for r in &grid.receptor_axis {
        write!(w, ",{r}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    for (li, row) in grid.cells.iter().enumerate() {
        write!(w, "{}", grid.length_axis[li] * 1e3).map_err(io_err)?;
        for cell in row {
            match cell.outcome {
                Some(outcome) => write!(w, ",{}", outcome.code()).map_err(io_err)?,
                None => write!(w, ",").map_err(io_err)?,
            }
        }
        writeln!(w).map_err(io_err)?;
    }
    Ok(path)
}

fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<u8, Error> {
    let spec = cfg.sweep.spec(&cfg.graph)?;
    let grid = run_sweep(&cfg.params_a(), &cfg.params_b(), &spec, Execution::preferred())?;

    let csv_path = write_sweep_csv(out_dir, &grid)?;
    let json_path = write_json(
        out_dir,
        "sweep.json",
        &SweepOutput { schema_version: SCHEMA_VERSION, grid: &grid },
    )?;

    let mut counts = [0usize; 3];
    let mut failed = 0usize;
    for row in &grid.cells {
        for cell in row {
            match cell.outcome {
                Some(o) => counts[o.code() as usize] += 1,
                None => failed += 1,
            }
        }
    }
    println!(
        "{}x{} grid: {} patterned, {} homogeneous, {} marginal, {} failed",
        grid.length_axis.len(),
        grid.receptor_axis.len(),
        counts[1],
        counts[0],
        counts[2],
        failed
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(0)
}

fn write_profile_csv(dir: &Path, profile: &[(f64, f64, f64)]) -> Result<PathBuf, Error> {
    let path = dir.join("channel_profile.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Config(format!("create csv: {e}")))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Config(format!("write csv: {e}"));
    writeln!(w, "x_um,species_x_molar,species_y_molar").map_err(io_err)?;
    for (x, cx, cy) in profile {
        writeln!(w, "{},{cx},{cy}", x * 1e6).map_err(io_err)?;
    }
    Ok(path)
}

fn cmd_validate(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<u8, Error> {
    let graph = cfg.to_graph()?;
    let model = NetworkModel::new(graph, cfg.params_a(), cfg.params_b())?;
    let report = run_validation(&model, &cfg.validate, seed)?;
    let path = write_json(out_dir, "validation.json", &report)?;
    if !report.channel_profile.is_empty() {
        let profile_path = write_profile_csv(out_dir, &report.channel_profile)?;
        println!("wrote {}", profile_path.display());
    }
    for check in &report.checks {
        let tag = if check.skipped {
            "SKIP"
        } else if check.passed {
            "PASS"
        } else {
            "FAIL"
        };
        println!("[{tag}] {}: {}", check.name, check.detail);
    }
    println!("wrote {}", path.display());
    if report.passed {
        Ok(0)
    } else {
        eprintln!("failed checks: {}", report.failed_checks().join(", "));
        Ok(1)
    }
}
