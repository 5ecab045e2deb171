//! Numerical dynamics of competitive market prices.
//!
//! The crate models how a vector of prices responds to excess demand when
//! price adjustment carries inertia. Its pieces:
//!
//! * [`demand`] — excess-demand fields and their Helmholtz-style split into
//!   a gradient (potential) part and a divergence-free (rotational) part;
//! * [`dynamics`] — second-order price dynamics on the unit price sphere,
//!   its flat small-deviation form, and the first-order comparison map,
//!   integrated with a classical fixed-step Runge-Kutta scheme;
//! * [`analytic`] — closed-form mode analysis of the two-good linear model,
//!   used as an independent oracle for the integrators;
//! * [`diagnostics`] — energy balance, the two-good angular-momentum law,
//!   near-recurrence detection, and loop circulation integrals;
//! * [`discrete`] — discrete-time heterogeneous-agent price maps and their
//!   algebraic equivalences;
//! * [`trajectory`] — the common sampled-trajectory container and its CSV
//!   serialization.
//!
//! Everything is deterministic: fixed step sizes, no internal threading, no
//! hidden state. Given identical inputs, runs reproduce bit-for-bit.

pub mod analytic;
pub mod demand;
pub mod diagnostics;
pub mod discrete;
pub mod dynamics;
pub mod error;
pub mod trajectory;

pub use error::{Error, Result};
