//! The three front-end operations: `run`, `analyze`, and `sweep`.
//!
//! All three read a scenario file first; failures before any simulation are
//! parse or validation errors and never leave partial artifacts. A numeric
//! abort mid-run flushes whatever was produced (partial CSV, flagged
//! summary) before the process reports exit code 4.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use pricedyn::analytic::{conservative_modes, rotational_modes, ModeSet};
use pricedyn::demand::LinearTwoPriceSpec;
use pricedyn::discrete::integrate_discrete;
use pricedyn::dynamics::integrate;
use pricedyn::trajectory::Trajectory;

use crate::error::{classify_json_error, CliError};
use crate::scenario::{Compiled, GammaDecl, ModelDecl, RunKind, Scenario};
use crate::summary::{build_summary, to_json_line};

/// Everything one scenario execution produces.
pub struct Artifacts {
    pub trajectory: Trajectory,
    pub summary: Value,
}

fn read_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read scenario file {path:?}: {e}")))?;
    Scenario::from_json(&text)
}

/// Runs a compiled scenario and evaluates its diagnostics. A numeric abort
/// still yields artifacts (partial trajectory, flagged summary); the caller
/// decides how to surface it.
pub fn execute(compiled: &Compiled) -> Result<Artifacts, CliError> {
    let trajectory = match &compiled.run {
        RunKind::Continuous { params, initial } => {
            integrate(&compiled.model, params, initial.clone())?
        }
        RunKind::Discrete { spec, initial, steps, sample_every, stepper } => {
            integrate_discrete(&compiled.model, spec, initial, *steps, *sample_every, *stepper)?
        }
    };
    let summary = build_summary(compiled, &trajectory)?;
    Ok(Artifacts { trajectory, summary })
}

fn write_artifact(path: &Path, bytes: &[u8], what: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| {
                CliError::validation(format!("cannot create directory for {what} {path:?}: {e}"))
            })?;
        }
    }
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::validation(format!("cannot write {what} {path:?}: {e}")))?;
    file.write_all(bytes)
        .and_then(|_| file.flush())
        .map_err(|e| CliError::validation(format!("cannot write {what} {path:?}: {e}")))
}

/// `run <file>`: execute the scenario, write declared artifacts, print the
/// summary to stdout. Returns the numeric error after flushing artifacts
/// when the run aborted.
pub fn cmd_run(file: &Path, quiet: bool) -> Result<(), CliError> {
    let scenario = read_scenario(file)?;
    let compiled = scenario.compile()?;
    if !quiet {
        eprintln!("running scenario {:?} (mode {})", compiled.name, scenario.dynamics.mode);
    }
    let artifacts = execute(&compiled)?;
    if let Some(path) = &compiled.trajectory_csv {
        write_artifact(path, artifacts.trajectory.to_csv_string().as_bytes(), "trajectory CSV")?;
        if !quiet {
            eprintln!("wrote {}", path.display());
        }
    }
    if let Some(path) = &compiled.summary_json {
        write_artifact(path, to_json_line(&artifacts.summary).as_bytes(), "summary JSON")?;
        if !quiet {
            eprintln!("wrote {}", path.display());
        }
    }
    print!("{}", to_json_line(&artifacts.summary));
    if let Some(msg) = &artifacts.trajectory.error {
        return Err(CliError::numeric(format!(
            "run aborted ({msg}); partial outputs were written"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn scalar_gamma(decl: &GammaDecl) -> Result<f64, CliError> {
    match decl {
        GammaDecl::Scalar(g) => Ok(*g),
        GammaDecl::PerCommodity(gs) => {
            let first = *gs.first().ok_or_else(|| {
                CliError::validation("gamma list must not be empty")
            })?;
            if gs.iter().all(|g| *g == first) {
                Ok(first)
            } else {
                Err(CliError::validation(
                    "mode analysis assumes equal damping on every commodity",
                ))
            }
        }
    }
}

fn mode_set_json(set: &ModeSet) -> Value {
    Value::Array(
        set.modes
            .iter()
            .zip(&set.basis_labels)
            .map(|(w, basis)| {
                json!({
                    "basis": basis,
                    "im": Value::from(w.im),
                    "re": Value::from(w.re),
                })
            })
            .collect(),
    )
}

fn verdict(set: &ModeSet) -> &'static str {
    if set.all_decay() {
        "decays"
    } else if set.any_growth() {
        "grows"
    } else {
        "marginal"
    }
}

/// `analyze <file>`: print the characteristic-rate report for the scenario's
/// two-price model. Supports the two solvable families (no rotational
/// coupling, or no symmetric coupling).
pub fn cmd_analyze(file: &Path, quiet: bool) -> Result<(), CliError> {
    let scenario = read_scenario(file)?;
    let ModelDecl::LinearTwoPrice { alpha, beta, delta, p_hat } = &scenario.model else {
        return Err(CliError::validation(
            "analyze needs the linear_two_price model (with delta = 0 or beta = 0)",
        ));
    };
    let spec = LinearTwoPriceSpec::new(*alpha, *beta, *delta, *p_hat)?;
    let kappa = scenario
        .dynamics
        .kappa
        .ok_or_else(|| CliError::validation("analyze needs dynamics.kappa"))?;
    let gamma = scalar_gamma(
        scenario
            .dynamics
            .gamma
            .as_ref()
            .ok_or_else(|| CliError::validation("analyze needs dynamics.gamma"))?,
    )?;
    let report = if spec.delta() == 0.0 {
        let set = conservative_modes(&spec, kappa, gamma)?;
        json!({
            "asymptotic_ratio": Value::Null,
            "dominant": Value::Null,
            "kind": "conservative",
            "modes": mode_set_json(&set),
            "name": scenario.name,
            "spiral": set.any_oscillation(),
            "verdict": verdict(&set),
        })
    } else if spec.beta() == 0.0 {
        let modes = rotational_modes(&spec, kappa, gamma)?;
        json!({
            "asymptotic_ratio": modes.asymptotic_ratio.map(Value::from).unwrap_or(Value::Null),
            "dominant": modes
                .dominant
                .map(|w| json!({"im": Value::from(w.im), "re": Value::from(w.re)}))
                .unwrap_or(Value::Null),
            "kind": "rotational",
            "modes": mode_set_json(&modes.mode_set),
            "name": scenario.name,
            "spiral": modes.mode_set.any_oscillation(),
            "verdict": verdict(&modes.mode_set),
        })
    } else {
        return Err(CliError::validation(
            "analyze needs delta = 0 or beta = 0; the mixed case has no closed-form rates",
        ));
    };
    if !quiet {
        eprintln!("analyzed scenario {:?}", scenario.name);
    }
    print!("{}", to_json_line(&report));
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// One row of the sweep table: metrics when the point ran, error text when
/// it did not.
struct SweepRow {
    value: f64,
    terminal_t: Option<f64>,
    terminal_norm: Option<f64>,
    energy_initial: Option<f64>,
    energy_final: Option<f64>,
    energy_max_residual: Option<f64>,
    am_terminal_ratio: Option<f64>,
    am_max_residual: Option<f64>,
    loop_count: Option<usize>,
    error: Option<String>,
}

fn get_num(v: &Value, keys: &[&str]) -> Option<f64> {
    let mut cur = v;
    for k in keys {
        cur = cur.get(k)?;
    }
    cur.as_f64()
}

fn row_from_artifacts(value: f64, artifacts: &Artifacts) -> SweepRow {
    let s = &artifacts.summary;
    let terminal = artifacts.trajectory.terminal();
    SweepRow {
        value,
        terminal_t: Some(terminal.t),
        terminal_norm: Some(terminal.position.norm()),
        energy_initial: get_num(s, &["energy", "initial"]),
        energy_final: get_num(s, &["energy", "final"]),
        energy_max_residual: get_num(s, &["energy", "max_residual"]),
        am_terminal_ratio: get_num(s, &["angular_momentum", "terminal_ratio"]),
        am_max_residual: get_num(s, &["angular_momentum", "max_residual"]),
        loop_count: s.get("loops").and_then(|l| l.as_array()).map(|l| l.len()),
        error: artifacts.trajectory.error.clone(),
    }
}

fn row_from_error(value: f64, error: &CliError) -> SweepRow {
    SweepRow {
        value,
        terminal_t: None,
        terminal_norm: None,
        energy_initial: None,
        energy_final: None,
        energy_max_residual: None,
        am_terminal_ratio: None,
        am_max_residual: None,
        loop_count: None,
        error: Some(error.message.clone()),
    }
}

fn csv_opt_f64(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Flattens error text into a single CSV-safe cell.
fn csv_error(e: &Option<String>) -> String {
    e.as_deref()
        .map(|m| m.replace(',', ";").replace('\n', " "))
        .unwrap_or_default()
}

/// `sweep <file> --param <path> --grid <v1,v2,...>`: run the scenario once
/// per grid value of one scalar field, printing a CSV table with one row
/// per grid point in grid order. Per-point failures fill the row's error
/// column; the table always has exactly as many rows as grid points.
pub fn cmd_sweep(file: &Path, param: &str, grid: &[f64], quiet: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(file)
        .map_err(|e| CliError::parse(format!("cannot read scenario file {file:?}: {e}")))?;
    // Validate the base document before touching the grid.
    Scenario::from_json(&text)?.compile()?;
    let base: Value = serde_json::from_str(&text)
        .map_err(|e| classify_json_error(&e, "scenario"))?;

    let pointer = format!("/{}", param.replace('.', "/"));
    match base.pointer(&pointer) {
        None => {
            return Err(CliError::validation(format!(
                "unknown parameter path {param:?} (use dot-separated field names, e.g. dynamics.gamma)"
            )))
        }
        Some(Value::Number(_)) => {}
        Some(_) => {
            return Err(CliError::validation(format!(
                "parameter {param:?} is not a scalar number field"
            )))
        }
    }
    if grid.is_empty() {
        return Err(CliError::validation("sweep grid must not be empty"));
    }
    if let Some(bad) = grid.iter().find(|g| !g.is_finite()) {
        return Err(CliError::validation(format!("grid values must be finite, got {bad}")));
    }

    let mut rows = Vec::with_capacity(grid.len());
    for (index, &value) in grid.iter().enumerate() {
        let mut point = base.clone();
        *point.pointer_mut(&pointer).expect("path verified above") = json!(value);
        // Grid points write no per-run artifacts: every point would target
        // the same paths, so the table on stdout is the sweep's one output.
        point["output"] = json!({});
        let outcome = serde_json::from_value::<Scenario>(point)
            .map_err(|e| classify_json_error(&e, "scenario"))
            .and_then(|sc| sc.compile())
            .and_then(|compiled| execute(&compiled));
        let row = match &outcome {
            Ok(artifacts) => row_from_artifacts(value, artifacts),
            Err(e) => row_from_error(value, e),
        };
        if !quiet {
            eprintln!(
                "[{}/{}] {param} = {value}: {}",
                index + 1,
                grid.len(),
                row.error.as_deref().unwrap_or("ok")
            );
        }
        rows.push(row);
    }

    let mut out = String::new();
    out.push_str(&format!(
        "index,{param},terminal_t,terminal_norm,energy_initial,energy_final,\
         energy_max_residual,am_terminal_ratio,am_max_residual,loop_count,error\n"
    ));
    for (index, row) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{index},{},{},{},{},{},{},{},{},{},{}\n",
            row.value,
            csv_opt_f64(row.terminal_t),
            csv_opt_f64(row.terminal_norm),
            csv_opt_f64(row.energy_initial),
            csv_opt_f64(row.energy_final),
            csv_opt_f64(row.energy_max_residual),
            csv_opt_f64(row.am_terminal_ratio),
            csv_opt_f64(row.am_max_residual),
            row.loop_count.map(|n| n.to_string()).unwrap_or_default(),
            csv_error(&row.error),
        ));
    }
    print!("{out}");
    Ok(())
}
