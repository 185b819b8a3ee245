//! Models and parameter estimation for flux-mediated nano-electromechanical
//! systems: a dc-SQUID embedded in a microwave resonator with a mechanically
//! compliant string in its loop.
//!
//! The crate covers the forward models (SQUID inductance, flux-tunable
//! cavity response, Lorentz-force spring shift, flux-pinning stiffening,
//! thermal sideband spectra), the inverse problems (Lorentzian peak fits,
//! flux-tuning-curve fits, power-law fits on a damped least-squares engine),
//! and a discrete-time simulator of the active flux stabilization loop.
//!
//! All quantities are SI. Angular frequencies (rad/s) are used internally;
//! serialized interfaces carry ordinary frequencies in Hz.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod constants;
pub mod error;
pub mod estimation;
pub mod fluxlock;
pub mod mechanics;
pub mod numeric;
pub mod spectra;
pub mod squid;

pub use error::{ModelError, Result};
