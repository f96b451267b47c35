//! End-to-end tests of the binary: config handling, outputs, exit codes and
//! determinism.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU64, Ordering};

static DIR_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let n = DIR_COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!(
        "lateral-inhibition-test-{}-{tag}-{n}",
        std::process::id()
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lateral-inhibition"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn pair_config(extra: &str) -> String {
    format!(
        r#"{{
            "graph": {{
                "vertices": [
                    {{"id": "A1", "class": "A"}},
                    {{"id": "B1", "class": "B"}}
                ],
                "edges": [{{"i": "A1", "j": "B1", "length_um": 500.0}}]
            }}{extra}
        }}"#
    )
}

#[test]
fn analyze_nominal_network_is_patterned() {
    let dir = scratch_dir("analyze");
    let config = dir.join("config.json");
    fs::write(&config, pair_config("")).unwrap();
    let out = run(&["analyze", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("3 fixed point(s)"), "{stdout}");
    assert!(stdout.contains("classification: patterned"), "{stdout}");

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("fixed_points.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["outcome"], "patterned");
    assert_eq!(json["points"].as_array().unwrap().len(), 3);
}

#[test]
fn analyze_low_receptor_is_homogeneous() {
    let dir = scratch_dir("analyze-low");
    let config = dir.join("config.json");
    fs::write(
        &config,
        pair_config(r#", "parameters": {"receptor_total": 1e-12}"#),
    )
    .unwrap();
    let out = run(&["analyze", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1 fixed point(s)"), "{stdout}");
    assert!(stdout.contains("classification: homogeneous"), "{stdout}");
}

#[test]
fn analyze_non_equitable_network_exits_2() {
    let dir = scratch_dir("analyze-ne");
    let config = dir.join("config.json");
    fs::write(
        &config,
        r#"{
            "graph": {
                "vertices": [
                    {"id": "A1", "class": "A"},
                    {"id": "A2", "class": "A"},
                    {"id": "B1", "class": "B"}
                ],
                "edges": [
                    {"i": "A1", "j": "B1", "length_um": 500.0},
                    {"i": "A2", "j": "B1", "length_um": 900.0}
                ]
            }
        }"#,
    )
    .unwrap();
    let out = run(&["analyze", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not equitable"), "{stderr}");
    assert!(stderr.contains("A1") && stderr.contains("A2"), "{stderr}");
}

#[test]
fn bad_config_exits_1() {
    let dir = scratch_dir("badcfg");
    let config = dir.join("config.json");
    fs::write(&config, r#"{"graph": {"vertices": [], "edges": []}, "nope": 1}"#).unwrap();
    let out = run(&["analyze", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let missing = run(&["analyze", "/definitely/not/here.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn simulate_writes_trajectory_and_contrast() {
    let dir = scratch_dir("simulate");
    let config = dir.join("config.json");
    fs::write(&config, pair_config("")).unwrap();
    let out = run(&["simulate", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("time_hours,"));
    assert!(header.contains("A1.synthase") && header.contains("B1.complex"));
    assert!(lines.count() > 100);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("simulate_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["steady"], true);
    assert!(summary["synthase_contrast"].as_f64().unwrap() > 5.0);
    assert_eq!(summary["winner"], "A1");
    let tau = summary["time_constant_hours"].as_f64().unwrap();
    assert!(tau > 1.0 && tau < 100.0);
}

#[test]
fn short_simulation_exits_3() {
    let dir = scratch_dir("simulate-short");
    let config = dir.join("config.json");
    fs::write(
        &config,
        pair_config(r#", "simulate": {"t_end_hours": 1.0, "sample_interval_hours": 0.01}"#),
    )
    .unwrap();
    let out = run(&["simulate", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("simulate_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["steady"], false);
}

#[test]
fn seed_flips_the_winner_on_symmetric_networks() {
    // Two A compartments: the seed selects which one gets the bump, and the
    // contrast magnitude is seed-independent.
    let config_text = r#"{
        "graph": {
            "vertices": [
                {"id": "A1", "class": "A"},
                {"id": "A2", "class": "A"},
                {"id": "B1", "class": "B"},
                {"id": "B2", "class": "B"}
            ],
            "edges": [
                {"i": "A1", "j": "B1", "length_um": 500.0},
                {"i": "A1", "j": "B2", "length_um": 700.0},
                {"i": "A2", "j": "B1", "length_um": 700.0},
                {"i": "A2", "j": "B2", "length_um": 500.0}
            ]
        }
    }"#;
    let mut winners = Vec::new();
    let mut contrasts = Vec::new();
    for seed in ["0", "1"] {
        let dir = scratch_dir(&format!("seedflip{seed}"));
        let config = dir.join("config.json");
        fs::write(&config, config_text).unwrap();
        let out = run(&[
            "simulate",
            config.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("simulate_summary.json")).unwrap())
                .unwrap();
        winners.push(summary["seeded_compartment"].as_str().unwrap().to_string());
        contrasts.push(summary["synthase_contrast"].as_f64().unwrap());
    }
    assert_ne!(winners[0], winners[1]);
    let rel = (contrasts[0] - contrasts[1]).abs() / contrasts[0];
    assert!(rel < 1e-6, "contrast changed with the seed: {contrasts:?}");
}

fn small_sweep_config() -> String {
    pair_config(
        r#", "sweep": {
            "receptor_min_molar": 1e-9,
            "receptor_max_molar": 1e-5,
            "receptor_points": 9,
            "length_min_mm": 0.3,
            "length_max_mm": 3.0,
            "length_points": 7
        }"#,
    )
}

#[test]
fn sweep_emits_matrix_csv_and_json() {
    let dir = scratch_dir("sweep");
    let config = dir.join("config.json");
    fs::write(&config, small_sweep_config()).unwrap();
    let out = run(&["sweep", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 8); // header + 7 length rows
    assert!(lines[0].starts_with("l12_mm,"));
    assert_eq!(lines[0].split(',').count(), 10);
    for line in &lines[1..] {
        for field in line.split(',').skip(1) {
            assert!(
                ["0", "1", "2"].contains(&field),
                "unexpected cell value {field:?}"
            );
        }
    }
    // The patterning region is present somewhere on this grid.
    assert!(csv.contains(",1"));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["cells"].as_array().unwrap().len(), 7);
}

#[test]
fn sweep_outputs_are_deterministic_across_runs_and_thread_counts() {
    let mut outputs = Vec::new();
    for (tag, threads) in [("det-a", "2"), ("det-b", "2"), ("det-c", "1")] {
        let dir = scratch_dir(tag);
        let config = dir.join("config.json");
        fs::write(&config, small_sweep_config()).unwrap();
        let out = run(&[
            "sweep",
            config.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
            "--threads",
            threads,
            "--seed",
            "42",
        ]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push((
            fs::read(dir.join("sweep.csv")).unwrap(),
            fs::read(dir.join("sweep.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1], "same-thread runs differ");
    assert_eq!(outputs[0], outputs[2], "thread count changed the results");
}

#[test]
fn validate_passes_on_the_nominal_pair() {
    let dir = scratch_dir("validate");
    let config = dir.join("config.json");
    // Reduced draw counts keep this an integration smoke test; the full
    // defaults run in the acceptance suite.
    fs::write(
        &config,
        pair_config(
            r#", "validate": {
                "concordance_draws": 4,
                "contraction_samples": 10,
                "compare_cells": 64,
                "compare_dt_s": 10.0
            }"#,
        ),
    )
    .unwrap();
    let out = run(&["validate", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "stdout: {stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 4, "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("validation.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
}

#[test]
fn validate_passes_on_the_four_compartment_parallelogram() {
    let dir = scratch_dir("validate-par");
    let config = dir.join("config.json");
    fs::write(
        &config,
        r#"{
            "graph": {
                "vertices": [
                    {"id": "A1", "class": "A"},
                    {"id": "A2", "class": "A"},
                    {"id": "B1", "class": "B"},
                    {"id": "B2", "class": "B"}
                ],
                "edges": [
                    {"i": "A1", "j": "B1", "length_um": 500.0},
                    {"i": "A1", "j": "B2", "length_um": 700.0},
                    {"i": "A2", "j": "B1", "length_um": 700.0},
                    {"i": "A2", "j": "B2", "length_um": 500.0}
                ]
            },
            "validate": {
                "concordance_draws": 3,
                "contraction_samples": 10,
                "compare_cells": 64,
                "compare_dt_s": 10.0
            }
        }"#,
    )
    .unwrap();
    let out = run(&["validate", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("[PASS] quotient_eigenvalue"), "{stdout}");
    assert!(dir.join("channel_profile.csv").exists());
}

#[test]
fn validate_skips_the_quotient_check_on_non_equitable_networks() {
    let dir = scratch_dir("validate-ne");
    let config = dir.join("config.json");
    fs::write(
        &config,
        r#"{
            "graph": {
                "vertices": [
                    {"id": "A1", "class": "A"},
                    {"id": "A2", "class": "A"},
                    {"id": "B1", "class": "B"}
                ],
                "edges": [
                    {"i": "A1", "j": "B1", "length_um": 500.0},
                    {"i": "A2", "j": "B1", "length_um": 900.0}
                ]
            },
            "validate": {
                "concordance_draws": 2,
                "contraction_samples": 5,
                "compare_cells": 64,
                "compare_dt_s": 10.0
            }
        }"#,
    )
    .unwrap();
    let out = run(&["validate", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("[SKIP] quotient_eigenvalue"), "{stdout}");
}
