//! Closed-form solutions for the linear two-price system, used as oracles for
//! the integrators and diagnostics.
//!
//! Two exactly solvable families:
//!
//! * `delta = 0` (conservative coupling): in the decoupled coordinates
//!   `y1 = q1 - q2` and `y2 = q1 + q2` the dynamics reduce to independent
//!   damped oscillators `y'' + gamma y' + c y = 0`. With cross-coupling
//!   `+beta` in the demand field, the difference coordinate `y1` sees the
//!   stiffened restoring coefficient `c = kappa (alpha + beta)` and the sum
//!   coordinate `y2` the softened `c = kappa (alpha - beta)`; `y2` is the
//!   combination that destabilizes when `beta > alpha`.
//! * `beta = 0` (rotational coupling): the complex coordinate `z = q1 + i q2`
//!   obeys `z'' + gamma z' + kappa (alpha + i delta) z = 0`.
//!
//! All rates are roots of the characteristic quadratic, computed directly via
//! complex arithmetic — no factored or small-damping shortcut is used, so the
//! results are exact for every sign of the discriminant.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::demand::LinearTwoPriceSpec;
use crate::dynamics::FlatState;
use crate::error::{Error, Result};

/// Relative threshold below which two characteristic roots are treated as a
/// repeated root (degenerate solution branch).
const REPEATED_ROOT_TOL: f64 = 1e-13;

/// Characteristic rates of a solvable configuration, with the coordinate
/// combination each rate governs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    /// Complex rates; real part is decay (negative) or growth (positive),
    /// imaginary part is oscillation frequency.
    pub modes: Vec<Complex64>,
    /// One label per mode naming the coordinate combination it governs.
    pub basis_labels: Vec<String>,
}

impl ModeSet {
    /// True when every mode strictly decays.
    pub fn all_decay(&self) -> bool {
        self.modes.iter().all(|w| w.re < 0.0)
    }

    /// True when at least one mode strictly grows.
    pub fn any_growth(&self) -> bool {
        self.modes.iter().any(|w| w.re > 0.0)
    }

    /// True when at least one mode oscillates.
    pub fn any_oscillation(&self) -> bool {
        self.modes.iter().any(|w| w.im != 0.0)
    }

    /// Largest real part across modes.
    pub fn max_real_part(&self) -> f64 {
        self.modes.iter().map(|w| w.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Rotational-coupling rates plus the dominant mode and its implied
/// asymptotic angular-momentum ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationalModes {
    /// The two rates for `z = q1 + i q2`.
    pub mode_set: ModeSet,
    /// Mode with the strictly largest real part; `None` when the real parts
    /// tie (the asymptotic ratio is undefined then).
    pub dominant: Option<Complex64>,
    /// Asymptotic ratio `L / |q|^2 = -Im(dominant)`; `None` on a tie.
    pub asymptotic_ratio: Option<f64>,
}

fn check_kappa_gamma(kappa: f64, gamma: f64) -> Result<()> {
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(Error::invalid(format!("kappa must be finite and > 0, got {kappa}")));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    Ok(())
}

/// Roots of `w^2 + gamma w + c = 0` for complex `c`, ordered by descending
/// real part. Returns the principal-branch pair.
fn quadratic_roots(gamma: f64, c: Complex64) -> (Complex64, Complex64) {
    let disc = Complex64::new(gamma * gamma, 0.0) - c * 4.0;
    let root = disc.sqrt();
    let w_plus = (-Complex64::new(gamma, 0.0) + root) / 2.0;
    let w_minus = (-Complex64::new(gamma, 0.0) - root) / 2.0;
    if w_plus.re >= w_minus.re {
        (w_plus, w_minus)
    } else {
        (w_minus, w_plus)
    }
}

/// Rates of the two decoupled oscillators for `delta = 0`.
///
/// Returns four modes: the pair for `y1 = q1 - q2` (restoring coefficient
/// `kappa (alpha + beta)`) followed by the pair for `y2 = q1 + q2`
/// (coefficient `kappa (alpha - beta)`). Complex roots form conjugate pairs.
pub fn conservative_modes(
    spec: &LinearTwoPriceSpec,
    kappa: f64,
    gamma: f64,
) -> Result<ModeSet> {
    if spec.delta() != 0.0 {
        return Err(Error::invalid(format!(
            "conservative modes require delta = 0, got {}",
            spec.delta()
        )));
    }
    check_kappa_gamma(kappa, gamma)?;
    let c_diff = Complex64::new(kappa * (spec.alpha() + spec.beta()), 0.0);
    let c_sum = Complex64::new(kappa * (spec.alpha() - spec.beta()), 0.0);
    let (d_plus, d_minus) = quadratic_roots(gamma, c_diff);
    let (s_plus, s_minus) = quadratic_roots(gamma, c_sum);
    Ok(ModeSet {
        modes: vec![d_plus, d_minus, s_plus, s_minus],
        basis_labels: vec![
            "y1 = q1 - q2".to_string(),
            "y1 = q1 - q2".to_string(),
            "y2 = q1 + q2".to_string(),
            "y2 = q1 + q2".to_string(),
        ],
    })
}

/// Rates of the complex oscillator for `beta = 0`.
///
/// The complex coordinate `z = q1 + i q2` obeys
/// `z'' + gamma z' + kappa (alpha + i delta) z = 0`; the two roots of that
/// quadratic are returned ordered by descending real part, along with the
/// dominant one and its implied asymptotic ratio `L / |q|^2 = -Im(dominant)`.
pub fn rotational_modes(
    spec: &LinearTwoPriceSpec,
    kappa: f64,
    gamma: f64,
) -> Result<RotationalModes> {
    if spec.beta() != 0.0 {
        return Err(Error::invalid(format!(
            "rotational modes require beta = 0, got {}",
            spec.beta()
        )));
    }
    check_kappa_gamma(kappa, gamma)?;
    let c = Complex64::new(kappa * spec.alpha(), kappa * spec.delta());
    let (w_dom, w_sub) = quadratic_roots(gamma, c);
    let scale = 1.0 + w_dom.norm().max(w_sub.norm());
    let tied = (w_dom.re - w_sub.re).abs() <= REPEATED_ROOT_TOL * scale;
    let dominant = if tied { None } else { Some(w_dom) };
    Ok(RotationalModes {
        mode_set: ModeSet {
            modes: vec![w_dom, w_sub],
            basis_labels: vec!["z = q1 + i*q2".to_string(), "z = q1 + i*q2".to_string()],
        },
        dominant,
        asymptotic_ratio: dominant.map(|w| -w.im),
    })
}

/// Exact state of the scalar complex oscillator `u'' + gamma u' + c u = 0`
/// at time `t`, from initial value and slope.
///
/// Distinct roots use mode superposition `A e^{w+ t} + B e^{w- t}`; a repeated
/// root switches to the degenerate branch `(c1 + c2 t) e^{w t}`. Near-critical
/// damping (roots separated by ~1e-8 or less but above the repeated-root
/// threshold) inherently loses a few digits to cancellation.
fn scalar_solution(
    gamma: f64,
    c: Complex64,
    u0: Complex64,
    udot0: Complex64,
    t: f64,
) -> (Complex64, Complex64) {
    let (w_plus, w_minus) = quadratic_roots(gamma, c);
    let separation = (w_plus - w_minus).norm();
    let scale = 1.0 + w_plus.norm().max(w_minus.norm());
    if separation <= REPEATED_ROOT_TOL * scale {
        let w = (w_plus + w_minus) / 2.0;
        let c1 = u0;
        let c2 = udot0 - w * u0;
        let growth = (w * t).exp();
        let u = (c1 + c2 * t) * growth;
        let udot = (c2 + w * (c1 + c2 * t)) * growth;
        (u, udot)
    } else {
        let a = (udot0 - w_minus * u0) / (w_plus - w_minus);
        let b = u0 - a;
        let e_plus = (w_plus * t).exp();
        let e_minus = (w_minus * t).exp();
        let u = a * e_plus + b * e_minus;
        let udot = a * w_plus * e_plus + b * w_minus * e_minus;
        (u, udot)
    }
}

/// Exact deviation-coordinate state a time `t` after `initial`, for the two
/// solvable cases (`delta = 0` or `beta = 0`), by mode superposition from the
/// initial state. The returned state carries `initial.t + t`.
pub fn flat_solution(
    spec: &LinearTwoPriceSpec,
    kappa: f64,
    gamma: f64,
    initial: &FlatState,
    t: f64,
) -> Result<FlatState> {
    check_kappa_gamma(kappa, gamma)?;
    if !t.is_finite() {
        return Err(Error::invalid("time must be finite"));
    }
    initial.validate()?;
    if initial.q.len() != 2 {
        return Err(Error::invalid(format!(
            "closed-form solution is two-price only, got dimension {}",
            initial.q.len()
        )));
    }
    if spec.delta() == 0.0 {
        // Decoupled real oscillators in y1 = q1 - q2, y2 = q1 + q2.
        let y1_0 = Complex64::new(initial.q[0] - initial.q[1], 0.0);
        let y1dot_0 = Complex64::new(initial.qdot[0] - initial.qdot[1], 0.0);
        let y2_0 = Complex64::new(initial.q[0] + initial.q[1], 0.0);
        let y2dot_0 = Complex64::new(initial.qdot[0] + initial.qdot[1], 0.0);
        let c1 = Complex64::new(kappa * (spec.alpha() + spec.beta()), 0.0);
        let c2 = Complex64::new(kappa * (spec.alpha() - spec.beta()), 0.0);
        let (y1, y1dot) = scalar_solution(gamma, c1, y1_0, y1dot_0, t);
        let (y2, y2dot) = scalar_solution(gamma, c2, y2_0, y2dot_0, t);
        // Real systems with real initial data stay real; drop the residual
        // imaginary round-off.
        let q = DVector::from_row_slice(&[(y2.re + y1.re) / 2.0, (y2.re - y1.re) / 2.0]);
        let qdot = DVector::from_row_slice(&[
            (y2dot.re + y1dot.re) / 2.0,
            (y2dot.re - y1dot.re) / 2.0,
        ]);
        let mut state = FlatState::new(q, qdot)?;
        state.t = initial.t + t;
        Ok(state)
    } else if spec.beta() == 0.0 {
        // Complex oscillator in z = q1 + i q2.
        let z0 = Complex64::new(initial.q[0], initial.q[1]);
        let zdot0 = Complex64::new(initial.qdot[0], initial.qdot[1]);
        let c = Complex64::new(kappa * spec.alpha(), kappa * spec.delta());
        let (z, zdot) = scalar_solution(gamma, c, z0, zdot0, t);
        let mut state = FlatState::new(
            DVector::from_row_slice(&[z.re, z.im]),
            DVector::from_row_slice(&[zdot.re, zdot.im]),
        )?;
        state.t = initial.t + t;
        Ok(state)
    } else {
        Err(Error::invalid(
            "closed-form solution needs delta = 0 or beta = 0",
        ))
    }
}
