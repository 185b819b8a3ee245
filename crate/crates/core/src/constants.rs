//! Physical constants (SI, CODATA 2018 exact values).

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054571817e-34;

/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602176634e-19;

/// Magnetic flux quantum h/2e = pi hbar / e (Wb), 2.067833848e-15.
/// Defined through `HBAR` and `E_CHARGE` so the energy and flux routes
/// through the model agree to machine precision.
pub const PHI0: f64 = std::f64::consts::PI * HBAR / E_CHARGE;

/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380649e-23;
