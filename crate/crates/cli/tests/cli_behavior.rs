//! End-to-end behavior of the `pricedyn` binary: artifact writing, exit
//! codes, stream contracts, sweep tables, and analyzer reports.

mod common;

use std::fs;

use common::{
    artifact_output, exit_code, read_summary, run_in, stderr_error_kind, stderr_str, stdout_str,
    two_price_scenario, write_scenario, Csv,
};
use serde_json::Value;
use tempfile::TempDir;

/// Dominant rotational rate at kappa = 1, alpha = 2, delta = 0.5, gamma = 1.
const ROT_DOMINANT_RE: f64 = -0.3128804228305738;
const ROT_DOMINANT_IM: f64 = -1.3360440622075547;
const ROT_ASYMPTOTIC_RATIO: f64 = 1.3360440622075547;
/// Oscillatory mode rates of the symmetric model at kappa = 1, alpha = 2,
/// beta = 1, gamma = 1.
const DIFF_MODE_IM: f64 = 1.6583123951777;
const SUM_MODE_IM: f64 = 0.8660254037844386;
/// Growing rate of the sum mode when beta exceeds alpha by 1 at gamma = 1.
const GROWTH_RATE: f64 = 0.6180339887498949;

#[test]
fn run_writes_trajectory_summary_and_sorted_stdout() {
    let dir = TempDir::new().unwrap();
    let scenario = two_price_scenario(
        "flat-damped",
        "flat",
        2.0,
        1.0,
        0.0,
        1.0,
        1.0,
        1e-3,
        2.0,
        10,
        r#""q": [0.1, 0.05]"#,
        r#""energy": true, "angular_momentum": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let out = run_in(dir.path(), &["run", "scenario.json"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));

    // Artifacts exist; stdout repeats the summary byte for byte.
    let summary_text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert_eq!(stdout_str(&out), summary_text);

    // Keys are sorted: re-serializing the parsed document (BTreeMap order)
    // reproduces the file exactly.
    let summary: Value = serde_json::from_str(&summary_text).unwrap();
    assert_eq!(serde_json::to_string(&summary).unwrap(), summary_text.trim_end());

    assert_eq!(summary["error"], Value::Null);
    assert_eq!(summary["name"], "flat-damped");
    assert_eq!(summary["mode"], "flat");
    assert_eq!(summary["positivity"]["violating_samples"], 0);
    let initial = summary["energy"]["initial"].as_f64().unwrap();
    let final_e = summary["energy"]["final"].as_f64().unwrap();
    assert!(initial > 0.0);
    assert!(final_e < initial);
    assert!(summary["energy"]["max_residual"].as_f64().unwrap() < 1e-3);
    assert!(summary["angular_momentum"]["terminal_ratio"].is_number());

    // Trajectory: expected shape, parseable floats, monotone energy.
    let csv = Csv::read(&dir.path().join("traj.csv"));
    assert_eq!(
        csv.header,
        [
            "t",
            "p1",
            "p2",
            "v1",
            "v2",
            "energy",
            "kinetic",
            "potential",
            "dissipation_rate",
            "injection_rate",
            "L"
        ]
    );
    assert_eq!(csv.rows.len(), 201, "2000 steps sampled every 10, plus t = 0");
    let energy = csv.column("energy");
    for pair in energy.windows(2) {
        assert!(
            pair[1] <= pair[0] + 1e-12,
            "damped symmetric run must lose energy: {} -> {}",
            pair[0],
            pair[1]
        );
    }
    assert!((energy[0] - initial).abs() <= 1e-15 * initial.abs());
}

#[test]
fn rotational_run_reports_angular_momentum_balance() {
    let dir = TempDir::new().unwrap();
    let scenario = two_price_scenario(
        "rotational",
        "flat",
        2.0,
        0.0,
        0.5,
        1.0,
        1.0,
        1e-3,
        20.0,
        1,
        r#""q": [0.1, 0.0]"#,
        r#""energy": true, "angular_momentum": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let out = run_in(dir.path(), &["run", "scenario.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));

    let summary = read_summary(&dir.path().join("summary.json"));
    let ratio = summary["angular_momentum"]["terminal_ratio"].as_f64().unwrap();
    assert!(
        (ratio - ROT_ASYMPTOTIC_RATIO).abs() <= 5e-3 * ROT_ASYMPTOTIC_RATIO,
        "terminal twist ratio {ratio} should settle near {ROT_ASYMPTOTIC_RATIO}"
    );
    let residual = summary["angular_momentum"]["max_residual"].as_f64().unwrap();
    assert!(residual <= 5e-6, "twist-balance residual too large: {residual}");

    let csv = Csv::read(&dir.path().join("traj.csv"));
    assert_eq!(csv.rows.len(), 20_001);
    assert!(csv.header.contains(&"L".to_string()));
}

#[test]
fn malformed_json_exits_two_without_artifacts() {
    let dir = TempDir::new().unwrap();
    write_scenario(dir.path(), "broken.json", "{\"name\": \"x\", ");

    let out = run_in(dir.path(), &["run", "broken.json"]);
    assert_eq!(exit_code(&out), 2);
    assert_eq!(stderr_error_kind(&out), "parse");
    assert_eq!(stdout_str(&out), "");
    assert!(!dir.path().join("traj.csv").exists());
    assert!(!dir.path().join("summary.json").exists());

    // A missing file is a parse failure too (cannot read input).
    let out = run_in(dir.path(), &["run", "no-such-file.json"]);
    assert_eq!(exit_code(&out), 2);
    assert_eq!(stderr_error_kind(&out), "parse");
}

#[test]
fn numeric_blowup_exits_four_with_partial_artifacts() {
    let dir = TempDir::new().unwrap();
    let scenario = two_price_scenario(
        "stiff-blowup",
        "flat",
        2.0,
        1.0,
        0.0,
        4.0e4,
        0.0,
        0.1,
        10.0,
        1,
        r#""q": [0.1, 0.05]"#,
        r#""energy": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let out = run_in(dir.path(), &["run", "scenario.json"]);
    assert_eq!(exit_code(&out), 4, "stderr: {}", stderr_str(&out));
    assert_eq!(stderr_error_kind(&out), "numeric");

    // Partial outputs were still flushed.
    let csv = Csv::read(&dir.path().join("traj.csv"));
    assert!(csv.rows.len() >= 2, "expected recorded prefix, got {} rows", csv.rows.len());
    let summary = read_summary(&dir.path().join("summary.json"));
    let error = summary["error"].as_str().unwrap();
    assert!(!error.is_empty());
    // The stdout copy of the summary is still printed for pipelines.
    assert!(stdout_str(&out).contains("\"error\":\""));
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let scenario = two_price_scenario(
        "repeat",
        "sphere",
        2.0,
        1.0,
        0.5,
        1.0,
        1.0,
        1e-2,
        3.0,
        5,
        r#""p": [0.8, 0.6], "v": [-0.06, 0.08]"#,
        r#""energy": true"#,
        artifact_output(),
    );
    let mut artifacts: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        write_scenario(dir.path(), "scenario.json", &scenario);
        let out = run_in(dir.path(), &["run", "scenario.json", "--quiet"]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));
        artifacts.push((
            fs::read(dir.path().join("traj.csv")).unwrap(),
            fs::read(dir.path().join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "trajectories differ between runs");
    assert_eq!(artifacts[0].1, artifacts[1].1, "summaries differ between runs");
}

#[test]
fn sweep_emits_one_row_per_grid_point_and_survives_bad_points() {
    let dir = TempDir::new().unwrap();
    let scenario = two_price_scenario(
        "gamma-sweep",
        "flat",
        2.0,
        0.0,
        0.5,
        1.0,
        1.0,
        1e-3,
        20.0,
        10,
        r#""q": [0.1, 0.0]"#,
        r#""energy": true, "angular_momentum": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "scenario.json",
            "--param",
            "dynamics.gamma",
            "--grid",
            "-1.0,0.5,1.0,2.0",
            "--quiet",
        ],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));

    let table = stdout_str(&out);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5, "header plus one row per grid point:\n{table}");
    assert_eq!(
        lines[0],
        "index,dynamics.gamma,terminal_t,terminal_norm,energy_initial,energy_final,\
         energy_max_residual,am_terminal_ratio,am_max_residual,loop_count,error"
    );

    let rows: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    // Grid order is preserved.
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], i.to_string());
    }
    // Negative damping is rejected by validation but does not stop the sweep.
    assert_eq!(rows[0][1], "-1");
    assert!(!rows[0][10].is_empty(), "bad point should carry an error note");
    assert!(rows[0][2].is_empty(), "bad point has no metrics");
    // The remaining points ran, and stronger damping lowers the twist ratio.
    let ratios: Vec<f64> = rows[1..]
        .iter()
        .map(|row| {
            assert!(row[10].is_empty(), "unexpected error: {}", row[10]);
            row[7].parse::<f64>().unwrap()
        })
        .collect();
    assert!(
        ratios[0] > ratios[1] && ratios[1] > ratios[2],
        "twist ratio should fall as damping grows: {ratios:?}"
    );

    // Sweeps never write per-point artifacts.
    assert!(!dir.path().join("traj.csv").exists());
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn single_point_sweep_matches_the_plain_run() {
    let dir = TempDir::new().unwrap();
    let scenario = two_price_scenario(
        "one-point",
        "flat",
        2.0,
        1.0,
        0.0,
        1.0,
        1.0,
        1e-3,
        2.0,
        10,
        r#""q": [0.1, 0.05]"#,
        r#""energy": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let run_out = run_in(dir.path(), &["run", "scenario.json", "--quiet"]);
    assert_eq!(exit_code(&run_out), 0);
    let summary = read_summary(&dir.path().join("summary.json"));
    let energy_final = summary["energy"]["final"].as_f64().unwrap();

    let sweep_out = run_in(
        dir.path(),
        &["sweep", "scenario.json", "--param", "dynamics.gamma", "--grid", "1.0", "--quiet"],
    );
    assert_eq!(exit_code(&sweep_out), 0);
    let table = stdout_str(&sweep_out);
    let row: Vec<&str> = table.lines().nth(1).expect("one data row").split(',').collect();
    let swept_final: f64 = row[5].parse().unwrap();
    assert_eq!(
        swept_final, energy_final,
        "sweep point with unchanged parameters must reproduce the run exactly"
    );
}

#[test]
fn twist_ratio_is_odd_in_the_rotational_coupling() {
    let dir = TempDir::new().unwrap();
    // Swap-symmetric start: flipping the sign of the coupling mirrors the
    // trajectory across the diagonal, so the twist ratio flips sign exactly.
    let scenario = two_price_scenario(
        "delta-sweep",
        "flat",
        2.0,
        1.0,
        0.5,
        1.0,
        1.0,
        1e-3,
        5.0,
        10,
        r#""q": [0.1, 0.1]"#,
        r#""energy": true, "angular_momentum": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "scenario.json",
            "--param",
            "model.delta",
            "--grid",
            "-0.5,0.0,0.5",
            "--quiet",
        ],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));

    let table = stdout_str(&out);
    let ratios: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap().parse::<f64>().unwrap())
        .collect();
    assert_eq!(ratios.len(), 3);
    assert_ne!(ratios[2], 0.0, "coupled run should acquire twist");
    assert_eq!(ratios[0], -ratios[2], "ratio must be exactly odd in the coupling");
    assert_eq!(ratios[1], 0.0, "uncoupled symmetric run must stay twist-free exactly");
}

#[test]
fn analyze_reports_decay_growth_and_rotation() {
    let dir = TempDir::new().unwrap();

    // Symmetric coupling only: four decaying oscillatory rates.
    let stable = two_price_scenario(
        "stable",
        "flat",
        2.0,
        1.0,
        0.0,
        1.0,
        1.0,
        1e-3,
        1.0,
        1,
        r#""q": [0.1, 0.0]"#,
        "",
        "",
    );
    write_scenario(dir.path(), "stable.json", &stable);
    let out = run_in(dir.path(), &["analyze", "stable.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));
    let report: Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["kind"], "conservative");
    assert_eq!(report["verdict"], "decays");
    assert_eq!(report["spiral"], true);
    assert_eq!(report["dominant"], Value::Null);
    assert_eq!(report["asymptotic_ratio"], Value::Null);
    let modes = report["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 4);
    for expected_im in [DIFF_MODE_IM, SUM_MODE_IM] {
        let found = modes.iter().any(|m| {
            (m["re"].as_f64().unwrap() + 0.5).abs() < 1e-12
                && (m["im"].as_f64().unwrap() - expected_im).abs() < 1e-12
        });
        assert!(found, "missing rate -0.5 + {expected_im}i in {modes:?}");
    }

    // Substitution dominating: one real growing rate.
    let growing = two_price_scenario(
        "growing",
        "flat",
        1.0,
        2.0,
        0.0,
        1.0,
        1.0,
        1e-3,
        1.0,
        1,
        r#""q": [0.1, 0.0]"#,
        "",
        "",
    );
    write_scenario(dir.path(), "growing.json", &growing);
    let out = run_in(dir.path(), &["analyze", "growing.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0);
    let report: Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["verdict"], "grows");
    let has_growth = report["modes"].as_array().unwrap().iter().any(|m| {
        (m["re"].as_f64().unwrap() - GROWTH_RATE).abs() < 1e-12
            && m["im"].as_f64().unwrap() == 0.0
    });
    assert!(has_growth, "expected real growing rate {GROWTH_RATE}");

    // Rotational coupling only: complex pair with a dominant member.
    let rotational = two_price_scenario(
        "rot",
        "flat",
        2.0,
        0.0,
        0.5,
        1.0,
        1.0,
        1e-3,
        1.0,
        1,
        r#""q": [0.1, 0.0]"#,
        "",
        "",
    );
    write_scenario(dir.path(), "rotational.json", &rotational);
    let out = run_in(dir.path(), &["analyze", "rotational.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0);
    let report: Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["kind"], "rotational");
    assert_eq!(report["verdict"], "decays");
    assert_eq!(report["spiral"], true);
    assert!((report["dominant"]["re"].as_f64().unwrap() - ROT_DOMINANT_RE).abs() < 1e-12);
    assert!((report["dominant"]["im"].as_f64().unwrap() - ROT_DOMINANT_IM).abs() < 1e-12);
    assert!(
        (report["asymptotic_ratio"].as_f64().unwrap() - ROT_ASYMPTOTIC_RATIO).abs() < 1e-12
    );
}

#[test]
fn quiet_flag_silences_stderr_on_success() {
    let dir = TempDir::new().unwrap();
    let scenario = two_price_scenario(
        "quiet",
        "flat",
        2.0,
        1.0,
        0.0,
        1.0,
        1.0,
        1e-2,
        1.0,
        10,
        r#""q": [0.1, 0.05]"#,
        r#""energy": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let out = run_in(dir.path(), &["run", "scenario.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0);
    assert_eq!(stderr_str(&out), "", "--quiet must keep stderr empty on success");
    // stdout still carries exactly the one-line summary.
    let text = stdout_str(&out);
    assert_eq!(text.lines().count(), 1);
    serde_json::from_str::<Value>(&text).unwrap();
}

#[test]
fn invalid_scenarios_exit_three() {
    let dir = TempDir::new().unwrap();

    // Unknown integrator mode.
    let bad_mode = two_price_scenario(
        "bad-mode",
        "orbit",
        2.0,
        1.0,
        0.0,
        1.0,
        1.0,
        1e-3,
        1.0,
        1,
        r#""q": [0.1, 0.0]"#,
        "",
        "",
    );
    write_scenario(dir.path(), "bad.json", &bad_mode);
    let out = run_in(dir.path(), &["run", "bad.json"]);
    assert_eq!(exit_code(&out), 3);
    assert_eq!(stderr_error_kind(&out), "validation");

    // Unknown JSON field is a data error, not a syntax error.
    write_scenario(
        dir.path(),
        "extra.json",
        r#"{"name": "x", "model": {"type": "linear_two_price", "alpha": 2.0, "beta": 1.0,
            "delta": 0.0, "p_hat": [1.0, 1.0]}, "dynamics": {"mode": "flat"},
            "initial": {"q": [0.1, 0.0]}, "unexpected": 1}"#,
    );
    let out = run_in(dir.path(), &["run", "extra.json"]);
    assert_eq!(exit_code(&out), 3);
    assert_eq!(stderr_error_kind(&out), "validation");

    // Sweeping a parameter that is not a number in the document.
    let good = two_price_scenario(
        "sweep-target",
        "flat",
        2.0,
        1.0,
        0.0,
        1.0,
        1.0,
        1e-3,
        1.0,
        1,
        r#""q": [0.1, 0.0]"#,
        "",
        "",
    );
    write_scenario(dir.path(), "good.json", &good);
    let out = run_in(
        dir.path(),
        &["sweep", "good.json", "--param", "dynamics.cadence", "--grid", "1.0"],
    );
    assert_eq!(exit_code(&out), 3);
    assert_eq!(stderr_error_kind(&out), "validation");
}

#[test]
fn sphere_run_stays_normalized_via_the_cli() {
    let dir = TempDir::new().unwrap();
    let scenario = two_price_scenario(
        "sphere-short",
        "sphere",
        2.0,
        1.0,
        0.5,
        1.0,
        1.0,
        1e-2,
        1.0,
        1,
        r#""p": [0.8, 0.6], "v": [-0.06, 0.08]"#,
        r#""energy": true"#,
        artifact_output(),
    );
    write_scenario(dir.path(), "scenario.json", &scenario);

    let out = run_in(dir.path(), &["run", "scenario.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));
    let summary = read_summary(&dir.path().join("summary.json"));
    let p: Vec<f64> = summary["terminal_state"]["position"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let norm2: f64 = p.iter().map(|x| x * x).sum();
    assert!((norm2 - 1.0).abs() <= 1e-9, "terminal point off the sphere: |p|^2 = {norm2}");
    assert_eq!(summary["mode"], "sphere");
}

#[test]
fn discrete_maps_run_via_the_cli() {
    let dir = TempDir::new().unwrap();

    let bullbear = r#"{
  "name": "bullbear",
  "model": {"type": "linear_two_price", "alpha": 2.0, "beta": 1.0, "delta": 0.0, "p_hat": [1.0, 1.0]},
  "dynamics": {"mode": "discrete:bullbear", "f_a": 0.6, "lambda": 0.3, "nu": 0.2, "bear_coeff": 0.1, "steps": 10, "sample_every": 1},
  "initial": {"p": [1.2, 0.9]},
  "output": {"trajectory_csv": "bb.csv", "summary_json": "bb.json"}
}
"#;
    write_scenario(dir.path(), "bullbear.json", bullbear);
    let out = run_in(dir.path(), &["run", "bullbear.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));
    let summary = read_summary(&dir.path().join("bb.json"));
    assert_eq!(summary["mode"], "discrete:bullbear");
    assert_eq!(summary["positivity"]["violating_samples"], 0);
    let csv = Csv::read(&dir.path().join("bb.csv"));
    assert_eq!(csv.rows.len(), 11);
    let t: Vec<f64> = csv.column("t");
    for (i, v) in t.iter().enumerate() {
        assert_eq!(*v, i as f64, "discrete time column must count steps");
    }

    let delayed = r#"{
  "name": "delayed",
  "model": {"type": "linear_two_price", "alpha": 2.0, "beta": 1.0, "delta": 0.0, "p_hat": [1.0, 1.0]},
  "dynamics": {"mode": "discrete:delayed", "f_a": 0.7, "variant": "taylor", "steps": 10, "sample_every": 2},
  "initial": {"p": [1.1, 0.95], "p_prev2": [1.09, 0.96]},
  "output": {"trajectory_csv": "del.csv", "summary_json": "del.json"}
}
"#;
    write_scenario(dir.path(), "delayed.json", delayed);
    let out = run_in(dir.path(), &["run", "delayed.json", "--quiet"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_str(&out));
    let summary = read_summary(&dir.path().join("del.json"));
    assert_eq!(summary["mode"], "discrete:delayed");
    let csv = Csv::read(&dir.path().join("del.csv"));
    assert_eq!(csv.rows.len(), 6, "10 steps sampled every 2, plus step 0");
}
