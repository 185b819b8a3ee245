//! Closed-form dc-SQUID quantities and the two-junction potential energy.
//!
//! The SQUID is treated as a flux-controlled nonlinear inductor with loop
//! self-inductance neglected. Displacement of the embedded string transduces
//! into loop flux as `dPhi = B_ip * l * lambda * x`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::{E_CHARGE, HBAR, PHI0};
use crate::error::{ModelError, Result};

/// Junction and loop-string geometry of the dc-SQUID.
///
/// Serialized JSON keys carry SI units: `i0_A`, `alpha`, `l_m`, `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquidParams {
    /// Average junction critical current I0 = (I1 + I2)/2 (A).
    #[serde(rename = "i0_A")]
    pub i0: f64,
    /// Junction asymmetry, 0 <= alpha < 1: I1 = I0(1-alpha), I2 = I0(1+alpha).
    pub alpha: f64,
    /// Suspended string length (m).
    #[serde(rename = "l_m")]
    pub l: f64,
    /// Mode shape factor converting displacement to effective area change,
    /// 0 < lambda <= 1.
    pub lambda: f64,
}

impl SquidParams {
    pub fn new(i0: f64, alpha: f64, l: f64, lambda: f64) -> Result<Self> {
        let p = Self { i0, alpha, l, lambda };
        p.validate()?;
        Ok(p)
    }

    /// Build parameters so that the zero-flux Josephson inductance equals
    /// `lj_min`: I0 = Phi0 / (4 pi lj_min).
    pub fn from_lj_min(lj_min: f64, alpha: f64, l: f64, lambda: f64) -> Result<Self> {
        if !(lj_min > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "lj_min must be > 0, got {lj_min}"
            )));
        }
        Self::new(PHI0 / (4.0 * PI * lj_min), alpha, l, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "i0 must be > 0, got {}",
                self.i0
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "alpha must be in [0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "l must be > 0, got {}",
                self.l
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "lambda must be in (0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Critical current of the weaker junction, I1 = I0(1-alpha) (A).
    pub fn i1(&self) -> f64 {
        self.i0 * (1.0 - self.alpha)
    }

    /// Critical current of the stronger junction, I2 = I0(1+alpha) (A).
    pub fn i2(&self) -> f64 {
        self.i0 * (1.0 + self.alpha)
    }

    /// Average Josephson energy of the SQUID (J).
    pub fn e_j(&self) -> f64 {
        josephson_energy(self.i1(), self.i2()).expect("validated currents")
    }
}

/// Flux bias point of the device.
///
/// `phi_b` is the normalized bias flux in radians (pi * Phi_b / Phi0); the
/// model is pi-periodic in it. Fields are in tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasPoint {
    /// Normalized bias flux (rad).
    #[serde(rename = "phi_b_rad")]
    pub phi_b: f64,
    /// In-plane magnetic field (T).
    #[serde(rename = "b_ip_T")]
    pub b_ip: f64,
    /// Out-of-plane magnetic field (T).
    #[serde(rename = "b_oop_T")]
    pub b_oop: f64,
}

impl BiasPoint {
    pub fn new(phi_b: f64, b_ip: f64, b_oop: f64) -> Result<Self> {
        let b = Self { phi_b, b_ip, b_oop };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_b.is_finite() && self.b_ip.is_finite() && self.b_oop.is_finite()) {
            return Err(ModelError::InvalidParameter(
                "bias point fields must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Flux- and asymmetry-dependent suppression factor
/// S0 = sqrt(cos^2(phi_b) + alpha^2 sin^2(phi_b)).
///
/// Bounded by `alpha <= S0 <= 1`, pi-periodic and even in `phi_b`.
pub fn s0(phi_b: f64, alpha: f64) -> f64 {
    let c = phi_b.cos();
    let s = phi_b.sin();
    (c * c + alpha * alpha * s * s).sqrt()
}

/// Average Josephson energy E_J = hbar (I1 + I2) / (4 e) (J).
pub fn josephson_energy(i1: f64, i2: f64) -> Result<f64> {
    if i1 < 0.0 || !(i2 > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "josephson_energy: need i1 >= 0 and i2 > 0, got ({i1}, {i2})"
        )));
    }
    Ok(HBAR * (i1 + i2) / (4.0 * E_CHARGE))
}

/// Flux-dependent Josephson inductance of the SQUID,
/// L_J = Phi0 / (4 pi I0 S0(phi_b)) (H). Minimum at `phi_b = 0`.
///
/// S0 below 1e-12 (reachable only for alpha = 0 next to half a flux quantum)
/// is treated as singular.
pub fn josephson_inductance(params: &SquidParams, phi_b: f64) -> Result<f64> {
    let s = s0(phi_b, params.alpha);
    if s < 1e-12 {
        return Err(ModelError::Singularity(format!(
            "S0 vanished at phi_b = {phi_b} (alpha = {})",
            params.alpha
        )));
    }
    Ok(PHI0 / (4.0 * PI * params.i0 * s))
}

/// Two-junction potential energy of the dc-SQUID (J),
/// E = -E_J1 cos(phi_plus + delta/2) - E_J2 cos(phi_plus - delta/2),
/// with phase difference delta = 2 phi_b + 2 pi B_ip l lambda x / Phi0
/// and E_Ji = (Phi0 / 2 pi) I_i.
pub fn squid_potential(phi_plus: f64, x: f64, bias: &BiasPoint, params: &SquidParams) -> f64 {
    let e_j1 = PHI0 / (2.0 * PI) * params.i1();
    let e_j2 = PHI0 / (2.0 * PI) * params.i2();
    let half_delta = bias.phi_b + PI * bias.b_ip * params.l * params.lambda * x / PHI0;
    -e_j1 * (phi_plus + half_delta).cos() - e_j2 * (phi_plus - half_delta).cos()
}

/// Lorentz force on the current-carrying string, F = B_ip * l * I (N).
pub fn lorentz_force(bias: &BiasPoint, params: &SquidParams, circulating_current: f64) -> f64 {
    bias.b_ip * params.l * circulating_current
}
