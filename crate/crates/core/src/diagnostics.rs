//! Conservation and dissipation diagnostics: the energy balance law, the
//! two-commodity angular-momentum law, near-recurrence (loop) detection, and
//! loop circulation integrals.
//!
//! Derivatives of sampled series use three-point Lagrange differentiation
//! (centered in the interior, one-sided at the endpoints), so every residual
//! reported here shrinks as O(dt^2) under step refinement. Line integrals use
//! trapezoidal quadrature on the stored samples with no resampling, keeping
//! the checks independent of integrator internals.

use nalgebra::DVector;

use crate::demand::{DemandModel, LinearTwoPriceSpec};
use crate::dynamics::DynamicsParams;
use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, TrajectoryMode};

/// Energy bookkeeping at one phase point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord {
    /// `|v|^2 / 2`.
    pub kinetic: f64,
    /// `kappa * phi(p)`, referenced to `phi(p_hat) = 0`.
    pub potential: f64,
    /// `kinetic + potential` (computed as that exact sum).
    pub total: f64,
    /// `v . (gamma v) >= 0`.
    pub dissipation_rate: f64,
    /// `kappa * v . A(p)`.
    pub injection_rate: f64,
}

/// Energy record at a phase point: price `p`, velocity `v`, and the model's
/// potential and divergence-free parts.
pub fn energy(
    price: &DVector<f64>,
    velocity: &DVector<f64>,
    model: &DemandModel,
    kappa: f64,
    gamma: &DVector<f64>,
) -> Result<EnergyRecord> {
    if price.len() != velocity.len() || gamma.len() != price.len() {
        return Err(Error::invalid(format!(
            "energy: mismatched dimensions (price {}, velocity {}, gamma {})",
            price.len(),
            velocity.len(),
            gamma.len()
        )));
    }
    let kinetic = 0.5 * velocity.norm_squared();
    let potential = kappa * model.potential_value(price)?;
    let total = kinetic + potential;
    let dissipation_rate = velocity.dot(&gamma.component_mul(velocity));
    let injection_rate = kappa * velocity.dot(&model.solenoidal_at(price)?);
    Ok(EnergyRecord { kinetic, potential, total, dissipation_rate, injection_rate })
}

/// A sampled residual series with its summary statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSeries {
    /// Sample times.
    pub times: Vec<f64>,
    /// Residual value at each sample.
    pub values: Vec<f64>,
    /// `max |r|` over the series.
    pub max_abs: f64,
    /// Root-mean-square of the series.
    pub rms: f64,
}

impl ResidualSeries {
    fn from_values(times: Vec<f64>, values: Vec<f64>) -> Self {
        let max_abs = values.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        let rms = if values.is_empty() {
            0.0
        } else {
            (values.iter().map(|r| r * r).sum::<f64>() / values.len() as f64).sqrt()
        };
        Self { times, values, max_abs, rms }
    }
}

/// Three-point Lagrange derivative of `(x0,f0),(x1,f1),(x2,f2)` evaluated
/// at `x`. Exact for quadratics, second-order accurate otherwise.
fn three_point_derivative(
    x0: f64,
    x1: f64,
    x2: f64,
    f0: f64,
    f1: f64,
    f2: f64,
    x: f64,
) -> f64 {
    f0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + f1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + f2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

/// Derivative of a sampled series at every sample: centered in the interior,
/// one-sided three-point at the two endpoints. Handles non-uniform spacing
/// (the final integrator sample may sit off the decimated grid).
fn derivative_series(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = ts.len();
    debug_assert!(n >= 3);
    let mut out = Vec::with_capacity(n);
    out.push(three_point_derivative(ts[0], ts[1], ts[2], ys[0], ys[1], ys[2], ts[0]));
    for i in 1..n - 1 {
        out.push(three_point_derivative(
            ts[i - 1],
            ts[i],
            ts[i + 1],
            ys[i - 1],
            ys[i],
            ys[i + 1],
            ts[i],
        ));
    }
    out.push(three_point_derivative(
        ts[n - 3],
        ts[n - 2],
        ts[n - 1],
        ys[n - 3],
        ys[n - 2],
        ys[n - 1],
        ts[n - 1],
    ));
    out
}

fn check_series(traj: &Trajectory, what: &str) -> Result<Vec<f64>> {
    if traj.samples.len() < 3 {
        return Err(Error::invalid(format!(
            "{what} needs at least 3 samples, got {}",
            traj.samples.len()
        )));
    }
    let times = traj.times();
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid(format!("{what}: sample times must strictly increase")));
        }
    }
    Ok(times)
}

/// Residual of the energy balance law at every sample:
/// `r = d(total)/dt - injection_rate + dissipation_rate`.
///
/// Uses the per-sample energy records stored in the trajectory.
pub fn energy_balance_residual(traj: &Trajectory) -> Result<ResidualSeries> {
    let times = check_series(traj, "energy balance residual")?;
    let totals: Vec<f64> = traj.samples.iter().map(|s| s.energy.total).collect();
    let d_total = derivative_series(&times, &totals);
    let values: Vec<f64> = traj
        .samples
        .iter()
        .zip(&d_total)
        .map(|(s, dt)| dt - s.energy.injection_rate + s.energy.dissipation_rate)
        .collect();
    Ok(ResidualSeries::from_values(times, values))
}

/// Angular momentum of a two-commodity deviation state:
/// `L = q2 qdot1 - q1 qdot2`.
pub fn angular_momentum(q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64> {
    if q.len() != 2 || qdot.len() != 2 {
        return Err(Error::invalid(format!(
            "angular momentum is defined for dimension 2, got ({}, {})",
            q.len(),
            qdot.len()
        )));
    }
    Ok(q[1] * qdot[0] - q[0] * qdot[1])
}

/// Angular-momentum law check plus the ratio series `L / |q|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularMomentumReport {
    /// Residual of `dL/dt = kappa delta |q|^2 - gamma L` at every sample.
    pub residual: ResidualSeries,
    /// `L / |q|^2` per sample (NaN where `q = 0`).
    pub ratio: Vec<f64>,
    /// Last entry of the ratio series.
    pub terminal_ratio: f64,
}

/// Residual of the two-commodity angular-momentum law
/// `r = dL/dt - kappa delta |q|^2 + gamma L` on a flat trajectory.
///
/// The law is checked in the recomputed form `dL/dt = kappa delta |q|^2 -
/// gamma L` with `L = q2 qdot1 - q1 qdot2`, which follows directly from the
/// `beta = 0` equations of motion.
pub fn angular_momentum_residual(
    traj: &Trajectory,
    spec: &LinearTwoPriceSpec,
    params: &DynamicsParams,
) -> Result<AngularMomentumReport> {
    if traj.mode != TrajectoryMode::Flat {
        return Err(Error::invalid(format!(
            "angular-momentum law applies to flat trajectories, got mode {}",
            traj.mode
        )));
    }
    if traj.dim != 2 {
        return Err(Error::invalid(format!(
            "angular-momentum law needs dimension 2, got {}",
            traj.dim
        )));
    }
    let gamma = params.gamma_scalar()?;
    let kappa = params.kappa();
    let delta = spec.delta();
    let times = check_series(traj, "angular-momentum residual")?;
    let l: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| angular_momentum(&s.position, &s.velocity))
        .collect::<Result<_>>()?;
    let dl = derivative_series(&times, &l);
    let mut values = Vec::with_capacity(l.len());
    let mut ratio = Vec::with_capacity(l.len());
    for ((s, li), dli) in traj.samples.iter().zip(&l).zip(&dl) {
        let q_sq = s.position.norm_squared();
        values.push(dli - kappa * delta * q_sq + gamma * li);
        ratio.push(li / q_sq);
    }
    let terminal_ratio = *ratio.last().expect("series checked non-empty");
    Ok(AngularMomentumReport {
        residual: ResidualSeries::from_values(times, values),
        ratio,
        terminal_ratio,
    })
}

/// A detected near-recurrence of the phase trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopRecord {
    /// Time of the loop's starting sample.
    pub t_start: f64,
    /// Time of the closing sample (`t_end > t_start`).
    pub t_end: f64,
    /// Index of the starting sample.
    pub start_index: usize,
    /// Index of the closing sample.
    pub end_index: usize,
    /// Phase-space distance between the two endpoint samples.
    pub closure_gap: f64,
    /// `kappa` times the loop line integral of the divergence-free part:
    /// `kappa * sum dp . A`.
    pub circulation_a: f64,
    /// Loop line integral of the damping force: `sum dp . (gamma v)`.
    pub circulation_damping: f64,
}

fn phase_tau(params: &DynamicsParams) -> f64 {
    let gamma_max = params.gamma().iter().fold(0.0f64, |acc, g| acc.max(*g));
    if gamma_max > 0.0 {
        1.0 / gamma_max
    } else {
        // Undamped runs have no damping timescale; weight position and
        // velocity equally.
        1.0
    }
}

fn phase_distance(traj: &Trajectory, i: usize, j: usize, tau: f64) -> f64 {
    let dp = &traj.samples[j].position - &traj.samples[i].position;
    let dv = &traj.samples[j].velocity - &traj.samples[i].velocity;
    (dp.norm_squared() + tau * tau * dv.norm_squared()).sqrt()
}

/// Price point used for field evaluation at a sample: flat trajectories store
/// deviations, so the model equilibrium is added back.
fn field_point(traj: &Trajectory, model: &DemandModel, i: usize) -> DVector<f64> {
    match traj.mode {
        TrajectoryMode::Flat => match model.equilibrium() {
            Some(p_hat) => p_hat + &traj.samples[i].position,
            None => traj.samples[i].position.clone(),
        },
        _ => traj.samples[i].position.clone(),
    }
}

/// Trapezoidal line integrals over a sampled segment whose endpoints are
/// within `eps` in phase space: returns
/// `(kappa * sum dp . A, sum dp . (gamma v))`.
pub fn circulation_integrals(
    traj: &Trajectory,
    start: usize,
    end: usize,
    model: &DemandModel,
    params: &DynamicsParams,
    eps: f64,
) -> Result<(f64, f64)> {
    if start >= end || end >= traj.samples.len() {
        return Err(Error::invalid(format!(
            "circulation segment [{start}, {end}] is out of range for {} samples",
            traj.samples.len()
        )));
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::invalid("circulation: eps must be finite and > 0"));
    }
    let tau = phase_tau(params);
    let gap = phase_distance(traj, start, end, tau);
    if gap > eps {
        return Err(Error::invalid(format!(
            "circulation segment is open: endpoint gap {gap:e} exceeds eps {eps:e}"
        )));
    }
    let gamma = params.gamma();
    let mut field_prev = model.solenoidal_at(&field_point(traj, model, start))?;
    let mut damp_prev = gamma.component_mul(&traj.samples[start].velocity);
    let mut circ_a = 0.0;
    let mut circ_damp = 0.0;
    for k in start..end {
        let field_next = model.solenoidal_at(&field_point(traj, model, k + 1))?;
        let damp_next = gamma.component_mul(&traj.samples[k + 1].velocity);
        let dp = &traj.samples[k + 1].position - &traj.samples[k].position;
        circ_a += dp.dot(&(&field_prev + &field_next)) / 2.0;
        circ_damp += dp.dot(&(&damp_prev + &damp_next)) / 2.0;
        field_prev = field_next;
        damp_prev = damp_next;
    }
    Ok((params.kappa() * circ_a, circ_damp))
}

/// Scans a trajectory for near-recurrences: sample pairs separated by at
/// least `min_duration` whose phase-space distance falls below `eps` at a
/// local minimum. Non-overlapping loops are returned in time order, each with
/// its circulation integrals.
///
/// The phase metric weights velocity differences by `tau = 1/max(gamma)`
/// (or 1 for undamped runs). Segments that never wander farther than
/// `2 * eps` from the starting sample are ignored, so settled tails and
/// constant states do not read as loops.
pub fn detect_recurrence(
    traj: &Trajectory,
    model: &DemandModel,
    params: &DynamicsParams,
    eps: f64,
    min_duration: f64,
) -> Result<Vec<LoopRecord>> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::invalid("recurrence detection: eps must be finite and > 0"));
    }
    if !min_duration.is_finite() || min_duration <= 0.0 {
        return Err(Error::invalid(
            "recurrence detection: min_duration must be finite and > 0",
        ));
    }
    if traj.samples.len() < 2 {
        return Ok(Vec::new());
    }
    let times = check_series(traj, "recurrence detection").or_else(|e| {
        if traj.samples.len() < 3 {
            Ok(traj.times())
        } else {
            Err(e)
        }
    })?;
    let n = traj.samples.len();
    let tau = phase_tau(params);
    let spacing = times[1] - times[0];
    let min_sep_samples = ((min_duration / spacing).ceil() as usize).max(1);
    let stride = (min_sep_samples / 2).max(1);

    let mut loops = Vec::new();
    let mut start = 0usize;
    while start + 1 < n && times[n - 1] - times[start] >= min_duration {
        let i = start;
        let d: Vec<f64> = (i..n).map(|j| phase_distance(traj, i, j, tau)).collect();
        let mut excursion = 0.0f64;
        let mut found: Option<usize> = None;
        for off in 1..d.len() {
            excursion = excursion.max(d[off]);
            let j = i + off;
            if times[j] - times[i] < min_duration {
                continue;
            }
            let left = d[off - 1];
            let right = if off + 1 < d.len() { d[off + 1] } else { f64::INFINITY };
            if d[off] < eps && d[off] <= left && d[off] <= right && excursion > 2.0 * eps {
                found = Some(j);
                break;
            }
        }
        match found {
            Some(j) => {
                let (circulation_a, circulation_damping) =
                    circulation_integrals(traj, i, j, model, params, eps)?;
                loops.push(LoopRecord {
                    t_start: times[i],
                    t_end: times[j],
                    start_index: i,
                    end_index: j,
                    closure_gap: d[j - i],
                    circulation_a,
                    circulation_damping,
                });
                start = j;
            }
            None => start += stride,
        }
    }
    Ok(loops)
}
