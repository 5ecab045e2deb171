//! Shared helpers for driving the `pricedyn` binary from integration tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

/// Command handle for the compiled CLI binary.
pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pricedyn"))
}

/// Runs the binary with `args` inside `dir` and captures all output.
pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn the pricedyn binary")
}

/// Writes a scenario file into `dir` and returns its path.
pub fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).expect("failed to write scenario file");
    path
}

/// Exit code of a finished process (panics on signal death).
pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process was killed by a signal")
}

pub fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout was not UTF-8")
}

pub fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr was not UTF-8")
}

/// Parses the machine-readable error object the binary prints on stderr and
/// returns its `kind` field. Expects exactly one line of JSON.
pub fn stderr_error_kind(out: &Output) -> String {
    let text = stderr_str(out);
    let line = text
        .lines()
        .last()
        .unwrap_or_else(|| panic!("stderr empty, expected an error object"));
    let value: Value =
        serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {line}"));
    value["error"]["kind"]
        .as_str()
        .unwrap_or_else(|| panic!("no error.kind in stderr: {line}"))
        .to_string()
}

/// Parsed CSV trajectory: header names plus one `Vec<f64>` per data row.
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Csv {
    pub fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path)
            .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Self {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .expect("CSV missing header row")
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .map(|line| {
                line.split(',')
                    .map(|cell| {
                        cell.parse::<f64>()
                            .unwrap_or_else(|e| panic!("bad CSV cell {cell:?}: {e}"))
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(
                row.len(),
                header.len(),
                "CSV row {i} has {} cells, header has {}",
                row.len(),
                header.len()
            );
        }
        Self { header, rows }
    }

    /// Index of a named column.
    pub fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name:?} in header {:?}", self.header))
    }

    /// All values of a named column, in row order.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let idx = self.col(name);
        self.rows.iter().map(|r| r[idx]).collect()
    }
}

/// Reads and parses a summary JSON file.
pub fn read_summary(path: &Path) -> Value {
    let text =
        fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    serde_json::from_str(&text)
        .unwrap_or_else(|e| panic!("summary at {} is not JSON: {e}", path.display()))
}

/// Scenario JSON for the linear two-price model in a continuous mode.
/// `initial` is the raw JSON body of the `initial` object, e.g. `"q": [..]`.
#[allow(clippy::too_many_arguments)]
pub fn two_price_scenario(
    name: &str,
    mode: &str,
    alpha: f64,
    beta: f64,
    delta: f64,
    kappa: f64,
    gamma: f64,
    dt: f64,
    t_end: f64,
    sample_every: usize,
    initial: &str,
    diagnostics: &str,
    output: &str,
) -> String {
    format!(
        r#"{{
  "name": "{name}",
  "model": {{"type": "linear_two_price", "alpha": {alpha}, "beta": {beta}, "delta": {delta}, "p_hat": [1.0, 1.0]}},
  "dynamics": {{"mode": "{mode}", "kappa": {kappa}, "gamma": {gamma}, "dt": {dt}, "t_end": {t_end}, "sample_every": {sample_every}}},
  "initial": {{{initial}}},
  "diagnostics": {{{diagnostics}}},
  "output": {{{output}}}
}}
"#
    )
}

/// Standard artifact declaration used by most tests.
pub fn artifact_output() -> &'static str {
    r#""trajectory_csv": "traj.csv", "summary_json": "summary.json""#
}
