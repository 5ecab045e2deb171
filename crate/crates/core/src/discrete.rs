//! Discrete-time heterogeneous-agent price maps.
//!
//! Three update rules for the mean price of a good, each mixing a fraction
//! `f_a` of one actor type with `f_b = 1 - f_a` of another:
//!
//! * **laggard** — type-b sellers reprice one period late, producing a
//!   trend-following term: `dp_t = f_a mu xi(p_{t-1}) + f_b nu dp_{t-1}`.
//! * **bullbear** — bulls chase the trend, bears lean against it:
//!   `dp_t = (f_a lambda + f_b nu) xi(p_{t-1}) + (f_a nu - f_b bear) dp_{t-1}`.
//! * **delayed** — type-b sellers respond to the price two periods back,
//!   either exactly or through a first-order expansion around `p_{t-1}`.
//!
//! All maps act on raw (un-normalized) price vectors; an optional per-step
//! renormalization flag exists for experiments that bridge to the spherical
//! dynamics, default off.

use nalgebra::DVector;

use crate::demand::DemandModel;
use crate::diagnostics::EnergyRecord;
use crate::error::{Error, Result};
use crate::trajectory::{PositivityReport, Sample, Trajectory, TrajectoryMode};

/// Which discrete map a spec describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscreteKind {
    Laggard,
    Bullbear,
    Delayed,
}

impl std::fmt::Display for DiscreteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DiscreteKind::Laggard => "laggard",
            DiscreteKind::Bullbear => "bullbear",
            DiscreteKind::Delayed => "delayed",
        };
        f.write_str(s)
    }
}

/// How the delayed map advances: the exact two-lag form, or its first-order
/// expansion around the most recent price.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayedMode {
    Exact,
    Taylor,
}

/// Step routine selector for [`integrate_discrete`]. The two laggard entries
/// are algebraically equivalent routes through the same map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscreteStepper {
    Laggard,
    LaggardSecondOrder,
    Bullbear,
    Delayed(DelayedMode),
}

impl DiscreteStepper {
    fn kind(self) -> DiscreteKind {
        match self {
            DiscreteStepper::Laggard | DiscreteStepper::LaggardSecondOrder => {
                DiscreteKind::Laggard
            }
            DiscreteStepper::Bullbear => DiscreteKind::Bullbear,
            DiscreteStepper::Delayed(_) => DiscreteKind::Delayed,
        }
    }
}

/// Actor mix and behavioral coefficients for one discrete map.
///
/// The bear trend-aversion coefficient is named `bear_coeff` rather than
/// reusing a damping symbol: it plays the same role for bears that `nu`
/// plays for trend followers, and is unrelated to the damping vector of the
/// continuous dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteAgentSpec {
    kind: DiscreteKind,
    f_a: f64,
    mu: f64,
    nu: f64,
    lambda_: f64,
    bear_coeff: f64,
    renormalize: bool,
}

fn check_coeff(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("{name} must be finite, got {value}")));
    }
    Ok(())
}

impl DiscreteAgentSpec {
    fn base(kind: DiscreteKind, f_a: f64) -> Result<Self> {
        if !f_a.is_finite() || !(0.0..=1.0).contains(&f_a) {
            return Err(Error::invalid(format!(
                "f_a must lie in [0, 1], got {f_a}"
            )));
        }
        Ok(Self {
            kind,
            f_a,
            mu: 0.0,
            nu: 0.0,
            lambda_: 0.0,
            bear_coeff: 0.0,
            renormalize: false,
        })
    }

    /// Laggard mix: a fraction `f_a` reprices on current excess demand with
    /// coefficient `mu`; the rest follow the previous change with
    /// coefficient `nu`.
    pub fn laggard(f_a: f64, mu: f64, nu: f64) -> Result<Self> {
        check_coeff("mu", mu)?;
        check_coeff("nu", nu)?;
        let mut spec = Self::base(DiscreteKind::Laggard, f_a)?;
        spec.mu = mu;
        spec.nu = nu;
        Ok(spec)
    }

    /// Bull/bear mix: bulls weight excess demand by `lambda_` and the trend
    /// by `nu`; bears lean against the trend with `bear_coeff`.
    pub fn bullbear(f_a: f64, lambda_: f64, nu: f64, bear_coeff: f64) -> Result<Self> {
        check_coeff("lambda", lambda_)?;
        check_coeff("nu", nu)?;
        check_coeff("bear_coeff", bear_coeff)?;
        let mut spec = Self::base(DiscreteKind::Bullbear, f_a)?;
        spec.lambda_ = lambda_;
        spec.nu = nu;
        spec.bear_coeff = bear_coeff;
        Ok(spec)
    }

    /// Delayed mix: a fraction `f_a` responds to the latest price, the rest
    /// to the price one further period back.
    pub fn delayed(f_a: f64) -> Result<Self> {
        Self::base(DiscreteKind::Delayed, f_a)
    }

    /// Enables per-step renormalization of the mean price to the unit
    /// sphere inside [`integrate_discrete`]. Off by default; history entries
    /// keep their recorded (pre-normalization) values.
    pub fn with_renormalization(mut self) -> Self {
        self.renormalize = true;
        self
    }

    pub fn kind(&self) -> DiscreteKind {
        self.kind
    }

    pub fn f_a(&self) -> f64 {
        self.f_a
    }

    /// `1 - f_a`.
    pub fn f_b(&self) -> f64 {
        1.0 - self.f_a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambda_(&self) -> f64 {
        self.lambda_
    }

    pub fn bear_coeff(&self) -> f64 {
        self.bear_coeff
    }

    /// True when `f_b * nu < 1`, the regime in which the laggard map's
    /// trend term damps rather than amplifies. Reported, not enforced:
    /// runs outside the regime are allowed and typically grow or sustain
    /// oscillation.
    pub fn is_laggard_damping(&self) -> bool {
        self.f_b() * self.nu < 1.0
    }

    fn expect_kind(&self, wanted: DiscreteKind, op: &str) -> Result<()> {
        if self.kind != wanted {
            return Err(Error::invalid(format!(
                "{op} needs a {wanted} spec, got {}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// State of a discrete price map between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteState {
    /// Current mean price vector.
    pub p_bar: DVector<f64>,
    /// Change applied on the most recent step.
    pub dp_prev: DVector<f64>,
    /// Price one step older than `p_bar` (delayed kind only).
    pub p_prev2: Option<DVector<f64>>,
    /// Integer step index.
    pub t: i64,
}

fn check_finite_vec(name: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{name} must have finite components")));
    }
    Ok(())
}

impl DiscreteState {
    /// State with a one-step memory (laggard and bullbear maps).
    pub fn new(p_bar: DVector<f64>, dp_prev: DVector<f64>) -> Result<Self> {
        check_finite_vec("p_bar", &p_bar)?;
        check_finite_vec("dp_prev", &dp_prev)?;
        if p_bar.len() != dp_prev.len() {
            return Err(Error::invalid(format!(
                "p_bar and dp_prev dimensions differ: {} vs {}",
                p_bar.len(),
                dp_prev.len()
            )));
        }
        Ok(Self { p_bar, dp_prev, p_prev2: None, t: 0 })
    }

    /// State with a two-step price history (delayed map warm-up):
    /// `dp_prev` is derived as `p_bar - p_prev2`.
    pub fn with_two_step_history(p_bar: DVector<f64>, p_prev2: DVector<f64>) -> Result<Self> {
        check_finite_vec("p_bar", &p_bar)?;
        check_finite_vec("p_prev2", &p_prev2)?;
        if p_bar.len() != p_prev2.len() {
            return Err(Error::invalid(format!(
                "p_bar and p_prev2 dimensions differ: {} vs {}",
                p_bar.len(),
                p_prev2.len()
            )));
        }
        let dp_prev = &p_bar - &p_prev2;
        Ok(Self { p_bar, dp_prev, p_prev2: Some(p_prev2), t: 0 })
    }

    fn dim(&self) -> usize {
        self.p_bar.len()
    }
}

fn check_step_inputs(state: &DiscreteState, model: &DemandModel, op: &str) -> Result<()> {
    if state.dim() != model.dim() {
        return Err(Error::invalid(format!(
            "{op}: state dimension {} does not match model dimension {}",
            state.dim(),
            model.dim()
        )));
    }
    Ok(())
}

fn finish_step(
    state: &DiscreteState,
    change: DVector<f64>,
    keep_history: bool,
) -> Result<DiscreteState> {
    let step = state.t + 1;
    if change.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite(format!("price change at step {step}")));
    }
    let p_bar = &state.p_bar + &change;
    if p_bar.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite(format!("price at step {step}")));
    }
    let p_prev2 = if keep_history { Some(state.p_bar.clone()) } else { None };
    Ok(DiscreteState { p_bar, dp_prev: change, p_prev2, t: step })
}

/// One step of the laggard map:
/// `dp_t = f_a mu xi(p_{t-1}) + f_b nu dp_{t-1}`.
pub fn step_laggard(
    state: &DiscreteState,
    spec: &DiscreteAgentSpec,
    model: &DemandModel,
) -> Result<DiscreteState> {
    spec.expect_kind(DiscreteKind::Laggard, "step_laggard")?;
    check_step_inputs(state, model, "step_laggard")?;
    let xi = model.eval_raw(&state.p_bar);
    let change = xi * (spec.f_a() * spec.mu()) + &state.dp_prev * (spec.f_b() * spec.nu());
    finish_step(state, change, false)
}

/// One step of the laggard map through its second-difference form
/// `f_b nu (dp_t - dp_{t-1}) = f_a mu xi(p_{t-1}) - (1 - f_b nu) dp_t`,
/// solved exactly for `dp_t`. The trajectory matches [`step_laggard`] to
/// machine precision; the route differs only in arithmetic order.
pub fn step_laggard_secondorder(
    state: &DiscreteState,
    spec: &DiscreteAgentSpec,
    model: &DemandModel,
) -> Result<DiscreteState> {
    spec.expect_kind(DiscreteKind::Laggard, "step_laggard_secondorder")?;
    check_step_inputs(state, model, "step_laggard_secondorder")?;
    let c = spec.f_b() * spec.nu();
    if c == 0.0 {
        return Err(Error::invalid(
            "the second-difference laggard form is undefined when f_b * nu = 0",
        ));
    }
    let xi = model.eval_raw(&state.p_bar);
    // Collect the dp_t terms on one side: (c + (1 - c)) dp_t =
    // f_a mu xi + c dp_{t-1}, then recover the second difference.
    let denom = c + (1.0 - c);
    let dp_t = (xi * (spec.f_a() * spec.mu()) + &state.dp_prev * c) / denom;
    let second_difference = &dp_t - &state.dp_prev;
    let change = &state.dp_prev + &second_difference;
    finish_step(state, change, false)
}

/// One step of the bull/bear map:
/// `dp_t = (f_a lambda + f_b nu) xi(p_{t-1}) + (f_a nu - f_b bear) dp_{t-1}`.
pub fn step_bullbear(
    state: &DiscreteState,
    spec: &DiscreteAgentSpec,
    model: &DemandModel,
) -> Result<DiscreteState> {
    spec.expect_kind(DiscreteKind::Bullbear, "step_bullbear")?;
    check_step_inputs(state, model, "step_bullbear")?;
    let xi = model.eval_raw(&state.p_bar);
    let demand_coeff = spec.f_a() * spec.lambda_() + spec.f_b() * spec.nu();
    let trend_coeff = spec.f_a() * spec.nu() - spec.f_b() * spec.bear_coeff();
    let change = xi * demand_coeff + &state.dp_prev * trend_coeff;
    finish_step(state, change, false)
}

/// One step of the delayed map.
///
/// `Exact` applies `dp_t = f_a xi(p_{t-1}) + f_b xi(p_{t-2})`; `Taylor`
/// expands the lagged term around the latest price,
/// `dp_t = xi(p_{t-1}) - f_b J(p_{t-1}) (p_{t-1} - p_{t-2})`, using the
/// model's Jacobian (analytic when stored, finite differences otherwise).
/// For linear excess demand the two modes coincide to rounding.
pub fn step_delayed(
    state: &DiscreteState,
    spec: &DiscreteAgentSpec,
    model: &DemandModel,
    mode: DelayedMode,
) -> Result<DiscreteState> {
    spec.expect_kind(DiscreteKind::Delayed, "step_delayed")?;
    check_step_inputs(state, model, "step_delayed")?;
    let p_prev2 = state.p_prev2.as_ref().ok_or_else(|| {
        Error::invalid("step_delayed needs a two-step price history (p_prev2 missing)")
    })?;
    if p_prev2.len() != state.dim() {
        return Err(Error::invalid(format!(
            "step_delayed: p_prev2 dimension {} does not match state dimension {}",
            p_prev2.len(),
            state.dim()
        )));
    }
    let change = match mode {
        DelayedMode::Exact => {
            let xi_now = model.eval_raw(&state.p_bar);
            let xi_lag = model.eval_raw(p_prev2);
            xi_now * spec.f_a() + xi_lag * spec.f_b()
        }
        DelayedMode::Taylor => {
            let xi_now = model.eval_raw(&state.p_bar);
            let jac = model.jacobian_at(&state.p_bar)?;
            let dp = &state.p_bar - p_prev2;
            xi_now - (jac * dp) * spec.f_b()
        }
    };
    finish_step(state, change, true)
}

fn step_once(
    state: &DiscreteState,
    spec: &DiscreteAgentSpec,
    model: &DemandModel,
    stepper: DiscreteStepper,
) -> Result<DiscreteState> {
    match stepper {
        DiscreteStepper::Laggard => step_laggard(state, spec, model),
        DiscreteStepper::LaggardSecondOrder => step_laggard_secondorder(state, spec, model),
        DiscreteStepper::Bullbear => step_bullbear(state, spec, model),
        DiscreteStepper::Delayed(mode) => step_delayed(state, spec, model, mode),
    }
}

struct DiscreteRecorder {
    samples: Vec<Sample>,
    violating: usize,
    min_component: f64,
}

impl DiscreteRecorder {
    fn push(&mut self, state: &DiscreteState) {
        let lowest = state.p_bar.iter().copied().fold(f64::INFINITY, f64::min);
        self.min_component = self.min_component.min(lowest);
        if lowest < 0.0 {
            self.violating += 1;
        }
        let kinetic = 0.5 * state.dp_prev.norm_squared();
        self.samples.push(Sample {
            t: state.t as f64,
            position: state.p_bar.clone(),
            velocity: state.dp_prev.clone(),
            // Discrete maps carry no potential or damping; only the change
            // magnitude is meaningful energy-wise.
            energy: EnergyRecord {
                kinetic,
                potential: 0.0,
                total: kinetic,
                dissipation_rate: 0.0,
                injection_rate: 0.0,
            },
            angular_momentum: None,
        });
    }
}

/// Iterates a discrete map for `steps` steps, recording every
/// `sample_every`-th state (plus the initial and final ones) as a
/// trajectory. A non-finite update aborts the run; samples gathered so far
/// are returned with the abort recorded in the trajectory's `error` field.
pub fn integrate_discrete(
    model: &DemandModel,
    spec: &DiscreteAgentSpec,
    initial: &DiscreteState,
    steps: u64,
    sample_every: usize,
    stepper: DiscreteStepper,
) -> Result<Trajectory> {
    if stepper.kind() != spec.kind() {
        return Err(Error::invalid(format!(
            "stepper {stepper:?} does not match spec kind {}",
            spec.kind()
        )));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    if sample_every == 0 {
        return Err(Error::invalid("sample_every must be >= 1"));
    }
    check_step_inputs(initial, model, "integrate_discrete")?;
    if spec.kind() == DiscreteKind::Delayed && initial.p_prev2.is_none() {
        return Err(Error::invalid(
            "the delayed map needs an initial state with a two-step history",
        ));
    }

    let mut recorder = DiscreteRecorder {
        samples: Vec::new(),
        violating: 0,
        min_component: f64::INFINITY,
    };
    recorder.push(initial);

    let mut state = initial.clone();
    let mut error = None;
    for k in 1..=steps {
        match step_once(&state, spec, model, stepper) {
            Ok(mut next) => {
                if spec.renormalize {
                    let norm = next.p_bar.norm();
                    if norm > 0.0 && norm.is_finite() {
                        next.p_bar /= norm;
                    }
                }
                state = next;
            }
            Err(e) if e.is_numeric() => {
                error = Some(format!("aborted at step {k}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
        if k % sample_every as u64 == 0 || k == steps {
            recorder.push(&state);
        }
    }

    let params_echo = format!(
        "mode=discrete:{} model={} f_a={} mu={} nu={} lambda={} bear_coeff={} steps={} sample_every={}",
        spec.kind(),
        model.label(),
        spec.f_a(),
        spec.mu(),
        spec.nu(),
        spec.lambda_(),
        spec.bear_coeff(),
        steps,
        sample_every,
    );
    Ok(Trajectory {
        mode: TrajectoryMode::Discrete(spec.kind()),
        dim: model.dim(),
        samples: recorder.samples,
        params_echo,
        error,
        positivity: PositivityReport {
            violating_samples: recorder.violating,
            min_component: recorder.min_component,
        },
    })
}
