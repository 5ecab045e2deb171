//! Front-end error type with a fixed kind -> exit-code mapping.
//!
//! Three failure classes reach the user, each with its own exit code so
//! scripts can branch on outcomes without scraping messages:
//!
//! * `Parse` (exit 2) — the scenario file cannot be read or is not valid
//!   JSON. Nothing has been written when this is reported.
//! * `Validation` (exit 3) — the file is valid JSON but the scenario is
//!   malformed: wrong shape, mode-incompatible fields, out-of-range values,
//!   unknown sweep parameter, or an unwritable output path.
//! * `Numeric` (exit 4) — the simulation produced a non-finite value. Partial
//!   outputs are flushed before the process exits.
//!
//! Every error is also printed to stderr as a single-line JSON object
//! `{"error":{"kind":...,"message":...}}`.

use std::fmt;

/// What went wrong, at the resolution scripts care about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliErrorKind {
    /// Unreadable file or invalid JSON syntax.
    Parse,
    /// Structurally or semantically invalid scenario, or unusable outputs.
    Validation,
    /// The run aborted on NaN/infinity.
    Numeric,
}

impl CliErrorKind {
    /// Process exit code for this kind.
    pub fn exit_code(self) -> u8 {
        match self {
            CliErrorKind::Parse => 2,
            CliErrorKind::Validation => 3,
            CliErrorKind::Numeric => 4,
        }
    }

    /// Stable machine-readable label.
    pub fn label(self) -> &'static str {
        match self {
            CliErrorKind::Parse => "parse",
            CliErrorKind::Validation => "validation",
            CliErrorKind::Numeric => "numeric",
        }
    }
}

/// Error carried out of every front-end operation.
#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: CliErrorKind,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        Self { kind: CliErrorKind::Parse, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: CliErrorKind::Validation, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { kind: CliErrorKind::Numeric, message: message.into() }
    }

    /// Process exit code.
    pub fn exit_code(&self) -> u8 {
        self.kind.exit_code()
    }

    /// Single-line JSON for stderr.
    pub fn to_stderr_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind.label(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.label(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<pricedyn::Error> for CliError {
    /// Library usage errors are scenario-validation failures; non-finite
    /// results are numeric failures.
    fn from(e: pricedyn::Error) -> Self {
        match e {
            pricedyn::Error::Invalid(_) => CliError::validation(e.to_string()),
            pricedyn::Error::NonFinite(_) => CliError::numeric(e.to_string()),
        }
    }
}

/// Classifies a JSON deserialization failure: syntax problems are parse
/// errors, data-shape problems (unknown field, wrong type, missing field)
/// are validation errors.
pub fn classify_json_error(e: &serde_json::Error, context: &str) -> CliError {
    match e.classify() {
        serde_json::error::Category::Syntax
        | serde_json::error::Category::Eof
        | serde_json::error::Category::Io => CliError::parse(format!("{context}: {e}")),
        serde_json::error::Category::Data => CliError::validation(format!("{context}: {e}")),
    }
}
