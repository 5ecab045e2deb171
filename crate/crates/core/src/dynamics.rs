//! Integrators for the price dynamics: second-order on the unit price sphere,
//! second-order in flat deviation coordinates, and the first-order baseline.
//!
//! All three continuous modes use the classical fourth-order one-step method
//! with a fixed step. Sphere-mode steps are followed by renormalization
//! (`p -> p/|p|`, then removal of the radial velocity component): the
//! constraint term `-p |v|^2` keeps the state on the sphere only to
//! integration error, and the projection prevents secular drift. Fixed
//! stepping keeps runs deterministic and aligns energy increments with
//! samples.
//!
//! Second-order sphere acceleration: `a = kappa xi_t(p) - gamma v - p |v|^2`,
//! where `xi_t` is the tangent-projected excess demand. Flat mode integrates
//! `qddot = kappa xi(p_hat + q) - gamma qdot` with the raw field. First-order
//! mode integrates `pdot = kappa xi_t(p)` with per-step renormalization.

use nalgebra::DVector;

use crate::demand::DemandModel;
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::trajectory::{PositivityReport, Sample, Trajectory, TrajectoryMode};

/// Allowed drift of `| |p|^2 - 1 |` for a valid sphere state.
pub const SPHERE_TOL: f64 = 1e-9;
/// Allowed radial velocity component `|p . v|` for a valid sphere state.
pub const TANGENCY_TOL: f64 = 1e-9;

/// Phase point of the sphere-constrained second-order dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereState {
    /// Unit price vector.
    pub p: DVector<f64>,
    /// Tangent velocity `dp/dt`.
    pub v: DVector<f64>,
    /// Simulation time.
    pub t: f64,
}

impl SphereState {
    /// Builds a state at `t = 0`, enforcing the sphere invariants.
    pub fn new(p: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        let state = Self { p, v, t: 0.0 };
        state.validate()?;
        Ok(state)
    }

    /// Checks `| |p|^2 - 1 | <= 1e-9`, `|p . v| <= 1e-9`, finiteness, and
    /// matching dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.v.len() {
            return Err(Error::invalid(format!(
                "sphere state: p has length {} but v has length {}",
                self.p.len(),
                self.v.len()
            )));
        }
        if !self.p.iter().all(|x| x.is_finite())
            || !self.v.iter().all(|x| x.is_finite())
            || !self.t.is_finite()
        {
            return Err(Error::invalid("sphere state must be finite"));
        }
        let norm_sq_drift = (self.p.norm_squared() - 1.0).abs();
        if norm_sq_drift > SPHERE_TOL {
            return Err(Error::invalid(format!(
                "price vector is off the unit sphere: | |p|^2 - 1 | = {norm_sq_drift:e}"
            )));
        }
        let radial = self.p.dot(&self.v).abs();
        if radial > TANGENCY_TOL {
            return Err(Error::invalid(format!(
                "velocity is not tangent: |p . v| = {radial:e}"
            )));
        }
        Ok(())
    }
}

/// Phase point of the flat (deviation-coordinate) second-order dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatState {
    /// Deviation vector `q = p - p_hat`.
    pub q: DVector<f64>,
    /// Velocity `dq/dt`.
    pub qdot: DVector<f64>,
    /// Simulation time.
    pub t: f64,
}

impl FlatState {
    /// Builds a state at `t = 0`.
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        let state = Self { q, qdot, t: 0.0 };
        state.validate()?;
        Ok(state)
    }

    /// Checks finiteness and matching dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.q.len() != self.qdot.len() {
            return Err(Error::invalid(format!(
                "flat state: q has length {} but qdot has length {}",
                self.q.len(),
                self.qdot.len()
            )));
        }
        if !self.q.iter().all(|x| x.is_finite())
            || !self.qdot.iter().all(|x| x.is_finite())
            || !self.t.is_finite()
        {
            return Err(Error::invalid("flat state must be finite"));
        }
        Ok(())
    }
}

/// Integration parameters: demand-response gain, diagonal damping, step size,
/// horizon, and output decimation.
///
/// Damping entries must be non-negative; zero is accepted so undamped
/// configurations (used by conservation diagnostics) are expressible.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsParams {
    kappa: f64,
    gamma: DVector<f64>,
    dt: f64,
    t_end: f64,
    sample_every: usize,
}

impl DynamicsParams {
    /// Validates and stores the parameters.
    pub fn new(
        kappa: f64,
        gamma: DVector<f64>,
        dt: f64,
        t_end: f64,
        sample_every: usize,
    ) -> Result<Self> {
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(Error::invalid(format!("kappa must be finite and > 0, got {kappa}")));
        }
        if gamma.is_empty() {
            return Err(Error::invalid("gamma needs at least one entry"));
        }
        if !gamma.iter().all(|g| g.is_finite() && *g >= 0.0) {
            return Err(Error::invalid("gamma entries must be finite and >= 0"));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::invalid(format!("dt must be finite and > 0, got {dt}")));
        }
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(Error::invalid(format!("t_end must be finite and > 0, got {t_end}")));
        }
        if sample_every == 0 {
            return Err(Error::invalid("sample_every must be a positive integer"));
        }
        Ok(Self { kappa, gamma, dt, t_end, sample_every })
    }

    /// Uniform damping across `n` commodities.
    pub fn uniform(kappa: f64, gamma: f64, n: usize, dt: f64, t_end: f64, sample_every: usize) -> Result<Self> {
        Self::new(kappa, DVector::from_element(n, gamma), dt, t_end, sample_every)
    }

    /// Demand-response gain.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Diagonal damping entries.
    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    /// The common damping value, or an error when entries differ.
    pub fn gamma_scalar(&self) -> Result<f64> {
        let g0 = self.gamma[0];
        if self.gamma.iter().all(|g| *g == g0) {
            Ok(g0)
        } else {
            Err(Error::invalid(
                "this operation assumes equal damping on every commodity, but gamma entries differ",
            ))
        }
    }

    /// Integration step.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Requested horizon; the integrator runs `round(t_end/dt)` steps.
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Output decimation factor.
    pub fn sample_every(&self) -> usize {
        self.sample_every
    }

    /// Number of fixed steps the integrator will take.
    pub fn n_steps(&self) -> u64 {
        ((self.t_end / self.dt).round() as u64).max(1)
    }
}

/// Initial condition; the variant selects the integration mode.
#[derive(Clone, Debug)]
pub enum InitialCondition {
    /// Second-order dynamics on the unit sphere.
    Sphere(SphereState),
    /// Second-order dynamics in deviation coordinates.
    Flat(FlatState),
    /// First-order adjustment on the unit sphere, from a price point.
    FirstOrder { p: DVector<f64> },
}

// ---------------------------------------------------------------------------
// Raw right-hand sides (no validation, used inside step loops; non-finite
// values propagate into the state and are caught once per step).
// ---------------------------------------------------------------------------

fn tangent_raw(p: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
    xi - p * p.dot(xi)
}

fn sphere_accel_raw(
    model: &DemandModel,
    kappa: f64,
    gamma: &DVector<f64>,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    let xi_t = tangent_raw(p, &model.eval_raw(p));
    xi_t * kappa - gamma.component_mul(v) - p * v.norm_squared()
}

fn flat_accel_raw(
    model: &DemandModel,
    kappa: f64,
    gamma: &DVector<f64>,
    p_hat: &DVector<f64>,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> DVector<f64> {
    model.eval_raw(&(p_hat + q)) * kappa - gamma.component_mul(qdot)
}

fn first_order_vel_raw(model: &DemandModel, kappa: f64, p: &DVector<f64>) -> DVector<f64> {
    tangent_raw(p, &model.eval_raw(p)) * kappa
}

fn rk4_second_order(
    p: &DVector<f64>,
    v: &DVector<f64>,
    dt: f64,
    accel: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let k1p = v.clone();
    let k1v = accel(p, v);
    let p2 = p + &k1p * (dt / 2.0);
    let v2 = v + &k1v * (dt / 2.0);
    let k2p = v2.clone();
    let k2v = accel(&p2, &v2);
    let p3 = p + &k2p * (dt / 2.0);
    let v3 = v + &k2v * (dt / 2.0);
    let k3p = v3.clone();
    let k3v = accel(&p3, &v3);
    let p4 = p + &k3p * dt;
    let v4 = v + &k3v * dt;
    let k4p = v4.clone();
    let k4v = accel(&p4, &v4);
    let np = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0);
    let nv = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
    (np, nv)
}

fn rk4_first_order(
    p: &DVector<f64>,
    dt: f64,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DVector<f64> {
    let k1 = f(p);
    let k2 = f(&(p + &k1 * (dt / 2.0)));
    let k3 = f(&(p + &k2 * (dt / 2.0)));
    let k4 = f(&(p + &k3 * dt));
    p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Sphere-constrained acceleration
/// `a = kappa xi_t(p) - gamma v - p |v|^2`, with the excess demand routed
/// through the tangent projection.
pub fn acceleration_sphere(
    state: &SphereState,
    model: &DemandModel,
    params: &DynamicsParams,
) -> Result<DVector<f64>> {
    state.validate()?;
    check_model_dims(model, params, state.p.len())?;
    let a = sphere_accel_raw(model, params.kappa(), params.gamma(), &state.p, &state.v);
    for (i, x) in a.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::non_finite(format!(
                "sphere acceleration component {i} at t = {}",
                state.t
            )));
        }
    }
    Ok(a)
}

/// Two-price flat acceleration
/// `(-kappa alpha q1 + kappa (beta + delta) q2 - gamma qdot1,
///   kappa (beta - delta) q1 - kappa alpha q2 - gamma qdot2)`.
///
/// Requires equal damping on both commodities.
pub fn acceleration_flat(
    state: &FlatState,
    spec: &crate::demand::LinearTwoPriceSpec,
    params: &DynamicsParams,
) -> Result<DVector<f64>> {
    state.validate()?;
    if state.q.len() != 2 {
        return Err(Error::invalid(format!(
            "two-price acceleration needs dimension 2, got {}",
            state.q.len()
        )));
    }
    let gamma = params.gamma_scalar()?;
    let kappa = params.kappa();
    let (q1, q2) = (state.q[0], state.q[1]);
    let (qd1, qd2) = (state.qdot[0], state.qdot[1]);
    let a1 = -kappa * spec.alpha() * q1 + kappa * (spec.beta() + spec.delta()) * q2 - gamma * qd1;
    let a2 = kappa * (spec.beta() - spec.delta()) * q1 - kappa * spec.alpha() * q2 - gamma * qd2;
    if !a1.is_finite() || !a2.is_finite() {
        return Err(Error::non_finite("flat acceleration"));
    }
    Ok(DVector::from_row_slice(&[a1, a2]))
}

/// Rescales `p` to unit norm and removes the radial velocity component:
/// `p <- p/|p|`, `v <- v - (p . v) p`.
pub fn renormalize(state: &SphereState) -> Result<SphereState> {
    let norm = state.p.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::non_finite(format!(
            "cannot renormalize price vector with |p| = {norm}"
        )));
    }
    let p = &state.p / norm;
    let v = &state.v - &p * p.dot(&state.v);
    Ok(SphereState { p, v, t: state.t })
}

/// One fixed step of the sphere dynamics, followed by renormalization.
pub fn step_sphere(
    state: &SphereState,
    model: &DemandModel,
    params: &DynamicsParams,
) -> Result<SphereState> {
    state.validate()?;
    check_model_dims(model, params, state.p.len())?;
    let (np, nv) = rk4_second_order(&state.p, &state.v, params.dt(), |p, v| {
        sphere_accel_raw(model, params.kappa(), params.gamma(), p, v)
    });
    if !np.iter().all(|x| x.is_finite()) || !nv.iter().all(|x| x.is_finite()) {
        return Err(Error::non_finite(format!("state after step from t = {}", state.t)));
    }
    renormalize(&SphereState { p: np, v: nv, t: state.t + params.dt() })
}

fn check_model_dims(model: &DemandModel, params: &DynamicsParams, n: usize) -> Result<()> {
    if model.dim() != n {
        return Err(Error::invalid(format!(
            "model dimension {} does not match state dimension {n}",
            model.dim()
        )));
    }
    if params.gamma().len() != n {
        return Err(Error::invalid(format!(
            "gamma has {} entries but the state has dimension {n}",
            params.gamma().len()
        )));
    }
    Ok(())
}

/// Fixed-step integration to `t_end` with sampling every `sample_every`
/// steps (the initial and final states are always sampled).
///
/// Deterministic: identical inputs produce bit-identical trajectories on one
/// platform. A non-finite state aborts the run, returning the partial
/// trajectory with the `error` field set. Positivity of sampled price points
/// is recorded, never enforced.
pub fn integrate(
    model: &DemandModel,
    params: &DynamicsParams,
    initial: InitialCondition,
) -> Result<Trajectory> {
    match initial {
        InitialCondition::Sphere(state) => integrate_sphere(model, params, state),
        InitialCondition::Flat(state) => integrate_flat(model, params, state),
        InitialCondition::FirstOrder { p } => integrate_first_order(model, params, p),
    }
}

struct Recorder {
    samples: Vec<Sample>,
    violating: usize,
    min_component: f64,
}

impl Recorder {
    fn new() -> Self {
        Self { samples: Vec::new(), violating: 0, min_component: f64::INFINITY }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        t: f64,
        position: DVector<f64>,
        velocity: DVector<f64>,
        price_point: &DVector<f64>,
        model: &DemandModel,
        params: &DynamicsParams,
        with_l: bool,
    ) {
        let lowest = price_point.iter().copied().fold(f64::INFINITY, f64::min);
        self.min_component = self.min_component.min(lowest);
        if lowest < 0.0 {
            self.violating += 1;
        }
        let energy = diagnostics::energy(
            price_point,
            &velocity,
            model,
            params.kappa(),
            params.gamma(),
        )
        .expect("dimensions are validated before integration starts");
        let angular_momentum = if with_l {
            Some(position[1] * velocity[0] - position[0] * velocity[1])
        } else {
            None
        };
        self.samples.push(Sample { t, position, velocity, energy, angular_momentum });
    }

    fn finish(
        self,
        mode: TrajectoryMode,
        dim: usize,
        params_echo: String,
        error: Option<String>,
    ) -> Trajectory {
        Trajectory {
            mode,
            dim,
            samples: self.samples,
            params_echo,
            error,
            positivity: PositivityReport {
                violating_samples: self.violating,
                min_component: self.min_component,
            },
        }
    }
}

fn params_echo(mode: &str, model: &DemandModel, params: &DynamicsParams) -> String {
    format!(
        "mode={mode} model={} kappa={} gamma={:?} dt={} t_end={} sample_every={}",
        model.label(),
        params.kappa(),
        params.gamma().as_slice(),
        params.dt(),
        params.t_end(),
        params.sample_every()
    )
}

/// Brings a possibly off-manifold initial state back onto the sphere,
/// warning when an adjustment was actually needed.
fn settle_initial(state: SphereState) -> Result<SphereState> {
    if state.validate().is_ok() {
        return Ok(state);
    }
    if !state.p.iter().all(|x| x.is_finite()) || !state.v.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("initial sphere state must be finite"));
    }
    if state.p.norm() == 0.0 {
        return Err(Error::invalid("initial price vector must be non-zero"));
    }
    log::warn!(
        "initial state violates sphere invariants (| |p|^2 - 1 | = {:e}, |p . v| = {:e}); renormalizing once at t = 0",
        (state.p.norm_squared() - 1.0).abs(),
        state.p.dot(&state.v).abs()
    );
    renormalize(&state)
}

fn integrate_sphere(
    model: &DemandModel,
    params: &DynamicsParams,
    state: SphereState,
) -> Result<Trajectory> {
    let state = settle_initial(state)?;
    let n = state.p.len();
    check_model_dims(model, params, n)?;
    let echo = params_echo("sphere", model, params);
    let n_steps = params.n_steps();
    let dt = params.dt();
    let mut rec = Recorder::new();
    let mut p = state.p;
    let mut v = state.v;
    rec.push(0.0, p.clone(), v.clone(), &p.clone(), model, params, false);
    let mut error = None;
    for step in 1..=n_steps {
        let (np, nv) = rk4_second_order(&p, &v, dt, |pp, vv| {
            sphere_accel_raw(model, params.kappa(), params.gamma(), pp, vv)
        });
        let norm = np.norm();
        if !np.iter().all(|x| x.is_finite()) || !nv.iter().all(|x| x.is_finite()) || norm == 0.0 {
            error = Some(format!("non-finite state at step {step} (t = {})", step as f64 * dt));
            break;
        }
        p = &np / norm;
        v = &nv - &p * p.dot(&nv);
        if step % params.sample_every() as u64 == 0 || step == n_steps {
            rec.push(step as f64 * dt, p.clone(), v.clone(), &p.clone(), model, params, false);
        }
    }
    Ok(rec.finish(TrajectoryMode::Sphere, n, echo, error))
}

fn integrate_flat(
    model: &DemandModel,
    params: &DynamicsParams,
    state: FlatState,
) -> Result<Trajectory> {
    state.validate()?;
    let n = state.q.len();
    check_model_dims(model, params, n)?;
    let p_hat = model
        .equilibrium()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(n));
    let echo = params_echo("flat", model, params);
    let with_l = n == 2;
    let n_steps = params.n_steps();
    let dt = params.dt();
    let mut rec = Recorder::new();
    let mut q = state.q;
    let mut qdot = state.qdot;
    rec.push(0.0, q.clone(), qdot.clone(), &(&p_hat + &q), model, params, with_l);
    let mut error = None;
    for step in 1..=n_steps {
        let (nq, nqdot) = rk4_second_order(&q, &qdot, dt, |qq, vv| {
            flat_accel_raw(model, params.kappa(), params.gamma(), &p_hat, qq, vv)
        });
        if !nq.iter().all(|x| x.is_finite()) || !nqdot.iter().all(|x| x.is_finite()) {
            error = Some(format!("non-finite state at step {step} (t = {})", step as f64 * dt));
            break;
        }
        q = nq;
        qdot = nqdot;
        if step % params.sample_every() as u64 == 0 || step == n_steps {
            rec.push(step as f64 * dt, q.clone(), qdot.clone(), &(&p_hat + &q), model, params, with_l);
        }
    }
    Ok(rec.finish(TrajectoryMode::Flat, n, echo, error))
}

fn integrate_first_order(
    model: &DemandModel,
    params: &DynamicsParams,
    p: DVector<f64>,
) -> Result<Trajectory> {
    if !p.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("initial price vector must be finite"));
    }
    let n = p.len();
    check_model_dims(model, params, n)?;
    let norm = p.norm();
    if norm == 0.0 {
        return Err(Error::invalid("initial price vector must be non-zero"));
    }
    if (norm - 1.0).abs() > SPHERE_TOL {
        log::warn!("initial price is off the unit sphere (|p| = {norm}); renormalizing once at t = 0");
    }
    let mut p = &p / norm;
    let echo = params_echo("first_order", model, params);
    let n_steps = params.n_steps();
    let dt = params.dt();
    let mut rec = Recorder::new();
    let v0 = first_order_vel_raw(model, params.kappa(), &p);
    rec.push(0.0, p.clone(), v0, &p.clone(), model, params, false);
    let mut error = None;
    for step in 1..=n_steps {
        let np = rk4_first_order(&p, dt, |pp| first_order_vel_raw(model, params.kappa(), pp));
        let norm = np.norm();
        if !np.iter().all(|x| x.is_finite()) || norm == 0.0 {
            error = Some(format!("non-finite state at step {step} (t = {})", step as f64 * dt));
            break;
        }
        p = &np / norm;
        if step % params.sample_every() as u64 == 0 || step == n_steps {
            let v = first_order_vel_raw(model, params.kappa(), &p);
            rec.push(step as f64 * dt, p.clone(), v, &p.clone(), model, params, false);
        }
    }
    Ok(rec.finish(TrajectoryMode::FirstOrder, n, echo, error))
}
