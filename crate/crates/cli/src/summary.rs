//! Run summary construction.
//!
//! Summaries are JSON objects with a fixed schema; keys serialize in sorted
//! order (the map type is ordered) and every number uses round-trip decimal
//! formatting. Non-finite values render as `null`.

use serde_json::{json, Value};

use pricedyn::diagnostics::{angular_momentum_residual, detect_recurrence, energy_balance_residual};
use pricedyn::trajectory::Trajectory;

use crate::error::CliError;
use crate::scenario::{Compiled, Mode, RunKind};

/// Converts a float, mapping NaN/infinity to `null`.
fn num(x: f64) -> Value {
    Value::from(x)
}

fn vec_f64(v: &nalgebra::DVector<f64>) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

/// True for the modes whose stored energy obeys the second-order balance
/// law (kinetic plus potential, fed by rotational work, drained by damping).
fn has_energy_balance(mode: Mode) -> bool {
    matches!(mode, Mode::Sphere | Mode::Flat)
}

/// Builds the summary document for one executed scenario.
///
/// Aborted runs keep their identity fields and terminal (partial) state but
/// report `null` for the law diagnostics, whose finite-difference stencils
/// are meaningless across an abort.
pub fn build_summary(compiled: &Compiled, traj: &Trajectory) -> Result<Value, CliError> {
    let healthy = traj.error.is_none();

    let energy = if compiled.energy {
        let max_residual = if healthy && has_energy_balance(compiled.mode) && traj.samples.len() >= 3
        {
            num(energy_balance_residual(traj)?.max_abs)
        } else {
            Value::Null
        };
        json!({
            "final": num(traj.terminal().energy.total),
            "initial": num(traj.samples[0].energy.total),
            "max_residual": max_residual,
        })
    } else {
        Value::Null
    };

    let angular_momentum = if compiled.angular_momentum && healthy && traj.samples.len() >= 3 {
        let (spec, params) = match (&compiled.two_price, &compiled.run) {
            (Some(spec), RunKind::Continuous { params, .. }) => (spec, params),
            _ => unreachable!("compilation enforces a flat two-price run"),
        };
        let report = angular_momentum_residual(traj, spec, params)?;
        json!({
            "max_residual": num(report.residual.max_abs),
            "terminal_ratio": num(report.terminal_ratio),
        })
    } else {
        Value::Null
    };

    let loops = match (&compiled.recurrence, &compiled.run) {
        (Some(rec), RunKind::Continuous { params, .. }) if healthy => {
            let records =
                detect_recurrence(traj, &compiled.model, params, rec.eps, rec.min_duration)?;
            Value::Array(
                records
                    .iter()
                    .map(|r| {
                        json!({
                            "circulation_a": num(r.circulation_a),
                            "circulation_damping": num(r.circulation_damping),
                            "closure_gap": num(r.closure_gap),
                            "end_index": r.end_index,
                            "start_index": r.start_index,
                            "t_end": num(r.t_end),
                            "t_start": num(r.t_start),
                        })
                    })
                    .collect(),
            )
        }
        _ => Value::Null,
    };

    let terminal = traj.terminal();
    Ok(json!({
        "angular_momentum": angular_momentum,
        "energy": energy,
        "error": traj.error.clone().map(Value::from).unwrap_or(Value::Null),
        "loops": loops,
        "mode": traj.mode.to_string(),
        "name": compiled.name,
        "params": traj.params_echo,
        "positivity": {
            "min_component": num(traj.positivity.min_component),
            "violating_samples": traj.positivity.violating_samples,
        },
        "terminal_state": {
            "position": vec_f64(&terminal.position),
            "t": num(terminal.t),
            "velocity": vec_f64(&terminal.velocity),
        },
    }))
}

/// Serializes a summary as a single line (sorted keys, trailing newline).
pub fn to_json_line(value: &Value) -> String {
    let mut s = value.to_string();
    s.push('\n');
    s
}
