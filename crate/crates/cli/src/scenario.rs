//! Scenario file format and its compilation into library calls.
//!
//! A scenario is a single JSON document (UTF-8, no comments) with five
//! blocks: `name`, `model`, `dynamics`, `initial`, `diagnostics`, `output`.
//! Deserialization is strict — unknown fields are rejected — and compilation
//! enforces mode compatibility: every field present must be meaningful for
//! the declared mode, so a typo fails loudly instead of being ignored.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use pricedyn::demand::{DemandModel, LinearTwoPriceSpec};
use pricedyn::discrete::{
    DelayedMode, DiscreteAgentSpec, DiscreteKind, DiscreteState, DiscreteStepper,
};
use pricedyn::dynamics::{DynamicsParams, FlatState, InitialCondition, SphereState};

use crate::error::CliError;

// ---------------------------------------------------------------------------
// Raw declarations (what the JSON file says)
// ---------------------------------------------------------------------------

/// Top-level scenario document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Identifier echoed into summaries.
    pub name: String,
    pub model: ModelDecl,
    pub dynamics: DynamicsDecl,
    pub initial: InitialDecl,
    #[serde(default)]
    pub diagnostics: DiagnosticsDecl,
    #[serde(default)]
    pub output: OutputDecl,
}

/// Demand-model declaration.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDecl {
    /// Two commodities with own-price, symmetric, and antisymmetric
    /// cross-price coefficients.
    LinearTwoPrice { alpha: f64, beta: f64, delta: f64, p_hat: [f64; 2] },
    /// Arbitrary linear generator matrix, split internally into its
    /// potential and rotational parts.
    Matrix {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
        p_hat: Vec<f64>,
    },
    /// Explicit potential coefficient matrix plus antisymmetric generator.
    Composite {
        potential: Vec<Vec<f64>>,
        skew: Vec<Vec<f64>>,
        p_hat: Vec<f64>,
    },
}

/// Damping: one value for every commodity, or one per commodity.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GammaDecl {
    Scalar(f64),
    PerCommodity(Vec<f64>),
}

/// Dynamics block: mode plus either the continuous-integrator parameters or
/// the discrete-map coefficients. Compilation rejects fields that do not
/// belong to the declared mode.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsDecl {
    /// `sphere`, `flat`, `first_order`, or `discrete:<laggard|bullbear|delayed>`.
    pub mode: String,
    // Continuous-integrator parameters.
    pub kappa: Option<f64>,
    pub gamma: Option<GammaDecl>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Output decimation (defaults to 1: keep every step).
    pub sample_every: Option<usize>,
    // Discrete-map parameters.
    pub f_a: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub lambda: Option<f64>,
    pub bear_coeff: Option<f64>,
    pub steps: Option<u64>,
    /// Discrete stepper variant: `secondorder` for the laggard map,
    /// `exact` or `taylor` for the delayed map.
    pub variant: Option<String>,
    /// Renormalize the discrete price vector to unit length after each step.
    pub renormalize: Option<bool>,
}

/// Initial state: `p`/`v` for the continuous modes, `q`/`v` for flat
/// (deviation) coordinates, `p`/`dp_prev`/`p_prev2` for discrete maps.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDecl {
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub dp_prev: Option<Vec<f64>>,
    pub p_prev2: Option<Vec<f64>>,
}

/// Which diagnostics to evaluate after the run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsDecl {
    /// Report initial/final totals and the balance residual (default on).
    #[serde(default = "default_true")]
    pub energy: bool,
    /// Report the rotation law residual and terminal twist ratio.
    #[serde(default)]
    pub angular_momentum: bool,
    /// Detect near-closed loops and integrate circulation over them.
    #[serde(default)]
    pub recurrence: Option<RecurrenceDecl>,
}

fn default_true() -> bool {
    true
}

impl Default for DiagnosticsDecl {
    fn default() -> Self {
        Self { energy: true, angular_momentum: false, recurrence: None }
    }
}

/// Recurrence-detection thresholds.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrenceDecl {
    pub eps: f64,
    pub min_duration: f64,
}

/// Output artifact paths; omitted paths suppress the artifact.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDecl {
    pub trajectory_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Compiled form (what the executor runs)
// ---------------------------------------------------------------------------

/// Integration mode selected by the `dynamics.mode` string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sphere,
    Flat,
    FirstOrder,
    Discrete(DiscreteKind),
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "sphere" => Ok(Mode::Sphere),
            "flat" => Ok(Mode::Flat),
            "first_order" => Ok(Mode::FirstOrder),
            "discrete:laggard" => Ok(Mode::Discrete(DiscreteKind::Laggard)),
            "discrete:bullbear" => Ok(Mode::Discrete(DiscreteKind::Bullbear)),
            "discrete:delayed" => Ok(Mode::Discrete(DiscreteKind::Delayed)),
            other => Err(CliError::validation(format!(
                "unknown mode {other:?}; expected sphere, flat, first_order, \
                 or discrete:<laggard|bullbear|delayed>"
            ))),
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, Mode::Discrete(_))
    }
}

/// The simulation a compiled scenario performs.
#[derive(Debug)]
pub enum RunKind {
    Continuous { params: DynamicsParams, initial: InitialCondition },
    Discrete {
        spec: DiscreteAgentSpec,
        initial: DiscreteState,
        steps: u64,
        sample_every: usize,
        stepper: DiscreteStepper,
    },
}

/// A validated scenario, ready to execute.
#[derive(Debug)]
pub struct Compiled {
    pub name: String,
    pub mode: Mode,
    pub model: DemandModel,
    /// Present when the model is the two-price family (needed by the
    /// rotation-law diagnostic and by `analyze`).
    pub two_price: Option<LinearTwoPriceSpec>,
    pub run: RunKind,
    pub energy: bool,
    pub angular_momentum: bool,
    pub recurrence: Option<RecurrenceDecl>,
    pub trajectory_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::validation(msg.into())
}

fn vector(values: &[f64], what: &str) -> Result<DVector<f64>, CliError> {
    if values.is_empty() {
        return Err(invalid(format!("{what} must not be empty")));
    }
    Ok(DVector::from_row_slice(values))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 {
        return Err(invalid(format!("{what} must not be empty")));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("{what} must be square (each row as long as the row count)")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(n, n, &flat))
}

impl ModelDecl {
    /// Builds the demand model (normalizing the two-price equilibrium onto
    /// the unit sphere when the mode lives there) and reports the two-price
    /// parameters when applicable.
    fn compile(&self, mode: Mode) -> Result<(DemandModel, Option<LinearTwoPriceSpec>), CliError> {
        match self {
            ModelDecl::LinearTwoPrice { alpha, beta, delta, p_hat } => {
                let mut spec = LinearTwoPriceSpec::new(*alpha, *beta, *delta, *p_hat)?;
                if matches!(mode, Mode::Sphere | Mode::FirstOrder) {
                    spec = spec.normalized()?;
                }
                Ok((spec.model(), Some(spec)))
            }
            ModelDecl::Matrix { m, p_hat } => {
                let m = matrix(m, "model.M")?;
                let p_hat = vector(p_hat, "model.p_hat")?;
                Ok((DemandModel::from_matrix(&m, &p_hat)?, None))
            }
            ModelDecl::Composite { potential, skew, p_hat } => {
                let hessian = matrix(potential, "model.potential")?;
                let skew = matrix(skew, "model.skew")?;
                let p_hat = vector(p_hat, "model.p_hat")?;
                Ok((DemandModel::composite(&hessian, &skew, &p_hat)?, None))
            }
        }
    }
}

impl GammaDecl {
    fn to_vector(&self, dim: usize) -> Result<DVector<f64>, CliError> {
        match self {
            GammaDecl::Scalar(g) => Ok(DVector::from_element(dim, *g)),
            GammaDecl::PerCommodity(gs) => {
                if gs.len() != dim {
                    return Err(invalid(format!(
                        "gamma lists {} entries but the model has {dim} commodities",
                        gs.len()
                    )));
                }
                Ok(DVector::from_row_slice(gs))
            }
        }
    }
}

/// Rejects a field that has no meaning in the declared mode.
fn reject<T>(field: &Option<T>, name: &str, mode: &str) -> Result<(), CliError> {
    if field.is_some() {
        Err(invalid(format!("field {name:?} does not apply to mode {mode:?}")))
    } else {
        Ok(())
    }
}

impl DynamicsDecl {
    fn compile_continuous(&self, dim: usize) -> Result<DynamicsParams, CliError> {
        let mode_name = &self.mode;
        for (opt, name) in [
            (self.f_a, "f_a"),
            (self.mu, "mu"),
            (self.nu, "nu"),
            (self.lambda, "lambda"),
            (self.bear_coeff, "bear_coeff"),
        ] {
            reject(&opt, name, mode_name)?;
        }
        reject(&self.steps, "steps", mode_name)?;
        reject(&self.variant, "variant", mode_name)?;
        reject(&self.renormalize, "renormalize", mode_name)?;
        let kappa = self.kappa.ok_or_else(|| invalid("continuous modes require kappa"))?;
        let gamma = self
            .gamma
            .as_ref()
            .ok_or_else(|| invalid("continuous modes require gamma"))?
            .to_vector(dim)?;
        let dt = self.dt.ok_or_else(|| invalid("continuous modes require dt"))?;
        let t_end = self.t_end.ok_or_else(|| invalid("continuous modes require t_end"))?;
        let sample_every = self.sample_every.unwrap_or(1);
        Ok(DynamicsParams::new(kappa, gamma, dt, t_end, sample_every)?)
    }

    fn compile_discrete(
        &self,
        kind: DiscreteKind,
    ) -> Result<(DiscreteAgentSpec, u64, usize, DiscreteStepper), CliError> {
        let mode_name = &self.mode;
        for (opt, name) in [
            (self.kappa, "kappa"),
            (self.dt, "dt"),
            (self.t_end, "t_end"),
        ] {
            reject(&opt, name, mode_name)?;
        }
        reject(&self.gamma, "gamma", mode_name)?;
        let f_a = self.f_a.ok_or_else(|| invalid("discrete modes require f_a"))?;
        let need = |x: Option<f64>, name: &str| {
            x.ok_or_else(|| invalid(format!("mode {mode_name:?} requires {name}")))
        };
        let (spec, stepper) = match kind {
            DiscreteKind::Laggard => {
                reject(&self.lambda, "lambda", mode_name)?;
                reject(&self.bear_coeff, "bear_coeff", mode_name)?;
                let spec =
                    DiscreteAgentSpec::laggard(f_a, need(self.mu, "mu")?, need(self.nu, "nu")?)?;
                let stepper = match self.variant.as_deref() {
                    None | Some("direct") => DiscreteStepper::Laggard,
                    Some("secondorder") => DiscreteStepper::LaggardSecondOrder,
                    Some(other) => {
                        return Err(invalid(format!(
                            "unknown laggard variant {other:?}; expected direct or secondorder"
                        )))
                    }
                };
                (spec, stepper)
            }
            DiscreteKind::Bullbear => {
                reject(&self.mu, "mu", mode_name)?;
                reject(&self.variant, "variant", mode_name)?;
                let spec = DiscreteAgentSpec::bullbear(
                    f_a,
                    need(self.lambda, "lambda")?,
                    need(self.nu, "nu")?,
                    need(self.bear_coeff, "bear_coeff")?,
                )?;
                (spec, DiscreteStepper::Bullbear)
            }
            DiscreteKind::Delayed => {
                reject(&self.mu, "mu", mode_name)?;
                reject(&self.nu, "nu", mode_name)?;
                reject(&self.lambda, "lambda", mode_name)?;
                reject(&self.bear_coeff, "bear_coeff", mode_name)?;
                let spec = DiscreteAgentSpec::delayed(f_a)?;
                let mode = match self.variant.as_deref() {
                    None | Some("exact") => DelayedMode::Exact,
                    Some("taylor") => DelayedMode::Taylor,
                    Some(other) => {
                        return Err(invalid(format!(
                            "unknown delayed variant {other:?}; expected exact or taylor"
                        )))
                    }
                };
                (spec, DiscreteStepper::Delayed(mode))
            }
        };
        let spec = if self.renormalize.unwrap_or(false) {
            spec.with_renormalization()
        } else {
            spec
        };
        let steps = self.steps.ok_or_else(|| invalid("discrete modes require steps"))?;
        let sample_every = self.sample_every.unwrap_or(1);
        Ok((spec, steps, sample_every, stepper))
    }
}

impl InitialDecl {
    fn compile(&self, mode: Mode, dim: usize) -> Result<CompiledInitial, CliError> {
        let take = |field: &Option<Vec<f64>>, name: &str| -> Result<DVector<f64>, CliError> {
            let values = field
                .as_ref()
                .ok_or_else(|| invalid(format!("this mode requires initial.{name}")))?;
            let v = vector(values, &format!("initial.{name}"))?;
            if v.len() != dim {
                return Err(invalid(format!(
                    "initial.{name} has {} entries but the model has {dim} commodities",
                    v.len()
                )));
            }
            Ok(v)
        };
        match mode {
            Mode::Sphere => {
                reject(&self.q, "initial.q", "sphere")?;
                reject(&self.dp_prev, "initial.dp_prev", "sphere")?;
                reject(&self.p_prev2, "initial.p_prev2", "sphere")?;
                let p = take(&self.p, "p")?;
                let v = match &self.v {
                    Some(_) => take(&self.v, "v")?,
                    None => DVector::zeros(dim),
                };
                // Off-manifold starting points are renormalized once by the
                // integrator, so construct the raw state here.
                Ok(CompiledInitial::Continuous(InitialCondition::Sphere(SphereState {
                    p,
                    v,
                    t: 0.0,
                })))
            }
            Mode::Flat => {
                reject(&self.p, "initial.p", "flat")?;
                reject(&self.dp_prev, "initial.dp_prev", "flat")?;
                reject(&self.p_prev2, "initial.p_prev2", "flat")?;
                let q = take(&self.q, "q")?;
                let qdot = match &self.v {
                    Some(_) => take(&self.v, "v")?,
                    None => DVector::zeros(dim),
                };
                Ok(CompiledInitial::Continuous(InitialCondition::Flat(FlatState::new(
                    q, qdot,
                )?)))
            }
            Mode::FirstOrder => {
                reject(&self.q, "initial.q", "first_order")?;
                reject(&self.v, "initial.v", "first_order")?;
                reject(&self.dp_prev, "initial.dp_prev", "first_order")?;
                reject(&self.p_prev2, "initial.p_prev2", "first_order")?;
                let p = take(&self.p, "p")?;
                Ok(CompiledInitial::Continuous(InitialCondition::FirstOrder { p }))
            }
            Mode::Discrete(_) => {
                reject(&self.q, "initial.q", "discrete")?;
                reject(&self.v, "initial.v", "discrete")?;
                let p_bar = take(&self.p, "p")?;
                let state = if self.p_prev2.is_some() {
                    reject(&self.dp_prev, "initial.dp_prev (p_prev2 already given)", "discrete")?;
                    DiscreteState::with_two_step_history(p_bar, take(&self.p_prev2, "p_prev2")?)?
                } else {
                    let dp_prev = match &self.dp_prev {
                        Some(_) => take(&self.dp_prev, "dp_prev")?,
                        None => DVector::zeros(dim),
                    };
                    DiscreteState::new(p_bar, dp_prev)?
                };
                Ok(CompiledInitial::Discrete(state))
            }
        }
    }
}

enum CompiledInitial {
    Continuous(InitialCondition),
    Discrete(DiscreteState),
}

impl Scenario {
    /// Parses a scenario from JSON text.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| crate::error::classify_json_error(&e, "scenario"))
    }

    /// Validates the scenario and resolves it into library types.
    pub fn compile(&self) -> Result<Compiled, CliError> {
        if self.name.is_empty() {
            return Err(invalid("scenario name must not be empty"));
        }
        let mode = Mode::parse(&self.dynamics.mode)?;
        let (model, two_price) = self.model.compile(mode)?;
        let dim = model.dim();
        let run = match (mode, self.initial.compile(mode, dim)?) {
            (Mode::Discrete(kind), CompiledInitial::Discrete(initial)) => {
                let (spec, steps, sample_every, stepper) =
                    self.dynamics.compile_discrete(kind)?;
                RunKind::Discrete { spec, initial, steps, sample_every, stepper }
            }
            (_, CompiledInitial::Continuous(initial)) => {
                let params = self.dynamics.compile_continuous(dim)?;
                RunKind::Continuous { params, initial }
            }
            _ => unreachable!("initial-state kind always matches the mode"),
        };
        if self.diagnostics.angular_momentum {
            let supported = mode == Mode::Flat && dim == 2 && two_price.is_some();
            if !supported {
                return Err(invalid(
                    "angular_momentum diagnostics need mode \"flat\" with the \
                     linear_two_price model",
                ));
            }
        }
        if let Some(rec) = &self.diagnostics.recurrence {
            if mode.is_discrete() || mode == Mode::FirstOrder {
                return Err(invalid(
                    "recurrence diagnostics apply to the second-order modes (sphere, flat)",
                ));
            }
            if !(rec.eps.is_finite() && rec.eps > 0.0) {
                return Err(invalid("recurrence.eps must be finite and > 0"));
            }
            if !(rec.min_duration.is_finite() && rec.min_duration > 0.0) {
                return Err(invalid("recurrence.min_duration must be finite and > 0"));
            }
        }
        if let (Some(a), Some(b)) = (&self.output.trajectory_csv, &self.output.summary_json) {
            if a == b {
                return Err(invalid("trajectory_csv and summary_json must be distinct paths"));
            }
        }
        Ok(Compiled {
            name: self.name.clone(),
            mode,
            model,
            two_price,
            run,
            energy: self.diagnostics.energy,
            angular_momentum: self.diagnostics.angular_momentum,
            recurrence: self.diagnostics.recurrence,
            trajectory_csv: self.output.trajectory_csv.clone(),
            summary_json: self.output.summary_json.clone(),
        })
    }
}
