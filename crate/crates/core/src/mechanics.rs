//! Mechanical frequency of the nanostring under flux bias and in-plane field:
//! the closed-form Lorentz-force spring shift, a brute-force oracle built on
//! the SQUID potential, flux-pinning (Labusch) stiffening, and the quantum /
//! thermal displacement scales.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};

use crate::circuit::{cavity_frequency, ResonatorParams};
use crate::constants::{HBAR, K_B, PHI0};
use crate::error::{ModelError, Result};
use crate::numeric::{central_derivative, minimize_scalar};
use crate::squid::{josephson_inductance, s0, squid_potential, BiasPoint, SquidParams};

/// Default lower guard on S0: the spring-shift denominator S0^3 diverges
/// toward half a flux quantum, outside the trusted model domain.
pub const DEFAULT_S_MIN: f64 = 0.05;

/// Mechanical-mode and geometry parameters of the nanostring.
///
/// JSON keys: `m_r_kg`, `omega0_hz`, `gamma_m_hz`, `length_m`, `width_m`,
/// `thickness_m`, `rho_kg_m3`. Frequencies are ordinary (Hz) in JSON and
/// angular (rad/s) in memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "StringParamsJson", into = "StringParamsJson")]
pub struct StringParams {
    /// Effective modal mass (kg).
    pub m_r: f64,
    /// Intrinsic angular resonance frequency Omega_0 (rad/s).
    pub omega0: f64,
    /// Mechanical damping rate Gamma_m (rad/s).
    pub gamma_m: f64,
    /// String length (m).
    pub length: f64,
    /// String width (m).
    pub width: f64,
    /// String thickness (m).
    pub thickness: f64,
    /// Material density (kg/m^3).
    pub rho: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StringParamsJson {
    m_r_kg: f64,
    omega0_hz: f64,
    gamma_m_hz: f64,
    length_m: f64,
    width_m: f64,
    thickness_m: f64,
    rho_kg_m3: f64,
}

impl From<StringParamsJson> for StringParams {
    fn from(j: StringParamsJson) -> Self {
        Self {
            m_r: j.m_r_kg,
            omega0: 2.0 * PI * j.omega0_hz,
            gamma_m: 2.0 * PI * j.gamma_m_hz,
            length: j.length_m,
            width: j.width_m,
            thickness: j.thickness_m,
            rho: j.rho_kg_m3,
        }
    }
}

impl From<StringParams> for StringParamsJson {
    fn from(p: StringParams) -> Self {
        Self {
            m_r_kg: p.m_r,
            omega0_hz: p.omega0 / (2.0 * PI),
            gamma_m_hz: p.gamma_m / (2.0 * PI),
            length_m: p.length,
            width_m: p.width,
            thickness_m: p.thickness,
            rho_kg_m3: p.rho,
        }
    }
}

impl StringParams {
    pub fn new(
        m_r: f64,
        omega0: f64,
        gamma_m: f64,
        length: f64,
        width: f64,
        thickness: f64,
        rho: f64,
    ) -> Result<Self> {
        let p = Self { m_r, omega0, gamma_m, length, width, thickness, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m_r", self.m_r),
            ("omega0", self.omega0),
            ("gamma_m", self.gamma_m),
            ("length", self.length),
            ("width", self.width),
            ("thickness", self.thickness),
            ("rho", self.rho),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParameter(format!(
                    "string {name} must be > 0, got {v}"
                )));
            }
        }
        if self.q_factor() <= 1.0 {
            return Err(ModelError::InvalidParameter(format!(
                "string Q = {} must exceed 1",
                self.q_factor()
            )));
        }
        let geometric_mass = self.rho * self.length * self.width * self.thickness;
        if geometric_mass < self.m_r {
            return Err(ModelError::InvalidParameter(format!(
                "effective mass {} exceeds geometric mass {geometric_mass}",
                self.m_r
            )));
        }
        Ok(())
    }

    /// Mechanical quality factor Omega_0 / Gamma_m.
    pub fn q_factor(&self) -> f64 {
        self.omega0 / self.gamma_m
    }
}

/// Flux-pinning stiffening model: Omega_0(B)^2 = omega00^2 + a B^k / rho.
///
/// JSON keys: `omega00_hz`, `a_N_per_m4_Tk`, `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "LabuschModelJson", into = "LabuschModelJson")]
pub struct LabuschModel {
    /// Zero-field intrinsic angular frequency (rad/s).
    pub omega00: f64,
    /// Pinning-stiffness prefactor a (N/m^4 per T^k).
    pub a: f64,
    /// Field exponent k.
    pub k: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabuschModelJson {
    omega00_hz: f64,
    #[serde(rename = "a_N_per_m4_Tk")]
    a_n_per_m4_tk: f64,
    k: f64,
}

impl From<LabuschModelJson> for LabuschModel {
    fn from(j: LabuschModelJson) -> Self {
        Self { omega00: 2.0 * PI * j.omega00_hz, a: j.a_n_per_m4_tk, k: j.k }
    }
}

impl From<LabuschModel> for LabuschModelJson {
    fn from(m: LabuschModel) -> Self {
        Self { omega00_hz: m.omega00 / (2.0 * PI), a_n_per_m4_tk: m.a, k: m.k }
    }
}

impl LabuschModel {
    pub fn new(omega00: f64, a: f64, k: f64) -> Result<Self> {
        let m = Self { omega00, a, k };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega00 > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "omega00 must be > 0, got {}",
                self.omega00
            )));
        }
        if !(self.a >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "Labusch prefactor must be >= 0, got {}",
                self.a
            )));
        }
        // sanity window from the type-II superconductor literature
        if !(1.0 <= self.k && self.k <= 3.0) {
            return Err(ModelError::InvalidParameter(format!(
                "Labusch exponent {} outside [1, 3]",
                self.k
            )));
        }
        Ok(())
    }

    /// Pinning stiffness alpha_L(B) = a B^k (N/m^4).
    pub fn alpha_l(&self, b_ip: f64) -> f64 {
        self.a * b_ip.powf(self.k)
    }
}

fn guard_s0(phi_b: f64, alpha: f64, s_min: f64) -> Result<f64> {
    let s = s0(phi_b, alpha);
    if s < s_min {
        return Err(ModelError::DomainGuard(format!(
            "S0 = {s} below guard {s_min} at phi_b = {phi_b}"
        )));
    }
    Ok(s)
}

/// Closed-form Lorentz-force spring shift of the squared mechanical frequency
/// (rad^2/s^2):
///
/// d(Omega^2) = 4 E_J pi^2 B_ip^2 l^2 lambda^2 (1 - alpha^2)
///              [cos^4(phi_b) - alpha^2 sin^4(phi_b)]
///              / (m_r Phi0^2 S0^3).
pub fn spring_shift_sq(
    string: &StringParams,
    squid: &SquidParams,
    bias: &BiasPoint,
    e_j: f64,
    s_min: f64,
) -> Result<f64> {
    let s = guard_s0(bias.phi_b, squid.alpha, s_min)?;
    let c = bias.phi_b.cos();
    let sn = bias.phi_b.sin();
    let alpha2 = squid.alpha * squid.alpha;
    let angular = c.powi(4) - alpha2 * sn.powi(4);
    let coupling = bias.b_ip * squid.l * squid.lambda;
    Ok(4.0 * e_j * PI * PI * coupling * coupling * (1.0 - alpha2) * angular
        / (string.m_r * PHI0 * PHI0 * s.powi(3)))
}

/// Effective mechanical frequency Omega_m = sqrt(Omega_0^2 + d(Omega^2))
/// (rad/s).
pub fn mechanical_frequency(
    string: &StringParams,
    squid: &SquidParams,
    bias: &BiasPoint,
    e_j: f64,
    s_min: f64,
) -> Result<f64> {
    let shift = spring_shift_sq(string, squid, bias, e_j, s_min)?;
    let omega_sq = string.omega0 * string.omega0 + shift;
    if !(omega_sq > 0.0) {
        return Err(ModelError::Instability(format!(
            "Omega_m^2 = {omega_sq} <= 0 at phi_b = {}",
            bias.phi_b
        )));
    }
    Ok(omega_sq.sqrt())
}

/// Brute-force spring shift of Omega^2 (rad^2/s^2) from the SQUID potential:
/// minimize the potential over the SQUID phase at displacements {-h, 0, +h}
/// and apply a central second difference in the displacement.
///
/// The displacement step transduces to 1e-3 flux quanta:
/// h = 1e-3 Phi0 / (B_ip l lambda).
pub fn numeric_spring_shift(
    string: &StringParams,
    squid: &SquidParams,
    bias: &BiasPoint,
    e_j: f64,
    s_min: f64,
) -> Result<f64> {
    guard_s0(bias.phi_b, squid.alpha, s_min)?;
    if bias.b_ip == 0.0 {
        return Ok(0.0); // potential independent of displacement
    }
    // scale junction currents so the average Josephson energy equals e_j
    let scaled = SquidParams {
        i0: 2.0 * PI * e_j / PHI0,
        ..*squid
    };
    scaled.validate()?;
    let h = 1e-3 * PHI0 / (bias.b_ip.abs() * squid.l * squid.lambda);
    let min_energy = |x: f64| -> Result<f64> {
        let (_, e_min) = minimize_scalar(
            |phi_plus| squid_potential(phi_plus, x, bias, &scaled),
            -PI,
            PI,
            64,
            1e-12,
        )?;
        Ok(e_min)
    };
    let em = min_energy(-h)?;
    let e0 = min_energy(0.0)?;
    let ep = min_energy(h)?;
    Ok((ep - 2.0 * e0 + em) / (h * h) / string.m_r)
}

/// Field-stiffened intrinsic frequency
/// Omega_0(B) = sqrt(omega00^2 + a B^k / rho) (rad/s).
pub fn labusch_frequency(model: &LabuschModel, string: &StringParams, b_ip: f64) -> Result<f64> {
    if !(b_ip >= 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "in-plane field must be >= 0, got {b_ip}"
        )));
    }
    Ok((model.omega00 * model.omega00 + model.alpha_l(b_ip) / string.rho).sqrt())
}

/// Zero-point displacement scale x_zpf = sqrt(hbar / (2 m_r Omega_0)) (m).
pub fn zero_point_fluctuation(string: &StringParams) -> f64 {
    (HBAR / (2.0 * string.m_r * string.omega0)).sqrt()
}

/// Classical thermal scales at temperature `t`:
/// mean-square displacement k_B T / (m_r Omega_0^2) (m^2) and
/// phonon occupation k_B T / (hbar Omega_0).
pub fn thermal_scales(string: &StringParams, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "temperature must be > 0, got {t}"
        )));
    }
    let x_sq = K_B * t / (string.m_r * string.omega0 * string.omega0);
    let occupation = K_B * t / (HBAR * string.omega0);
    Ok((x_sq, occupation))
}

/// Single-photon coupling estimate
/// g0 = |d omega_c / d Phi_b| (B_ip l lambda) x_zpf (rad/s),
/// with the flux derivative taken by central differences through L_J.
pub fn vacuum_coupling_estimate(
    res: &ResonatorParams,
    squid: &SquidParams,
    string: &StringParams,
    bias: &BiasPoint,
) -> Result<f64> {
    let d_phi = 1e-6; // rad, well inside the smooth region
    let lo = josephson_inductance(squid, bias.phi_b - d_phi)?;
    let hi = josephson_inductance(squid, bias.phi_b + d_phi)?;
    let _ = (lo, hi); // propagate singularity errors before differencing
    let slope_phi = central_derivative(
        |phi| cavity_frequency(res, josephson_inductance(squid, phi).expect("checked endpoints")),
        bias.phi_b,
        d_phi,
    );
    let slope_flux = slope_phi * PI / PHI0; // phi_b = pi Phi_b / Phi0
    Ok(slope_flux.abs() * bias.b_ip * squid.l * squid.lambda * zero_point_fluctuation(string))
}

/// One row of a mechanical tuning curve export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningPoint {
    pub phi_over_pi: f64,
    pub b_ip_t: f64,
    pub omega_m_hz: f64,
}

/// Mechanical frequency over a (flux, in-plane field) grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TuningCurve {
    pub points: Vec<TuningPoint>,
}

/// Evaluate Omega_m/2pi on the product grid of fields and normalized fluxes.
pub fn tuning_curves(
    string: &StringParams,
    squid: &SquidParams,
    e_j: f64,
    b_ips: &[f64],
    phi_over_pi: &[f64],
    s_min: f64,
) -> Result<TuningCurve> {
    if b_ips.is_empty() || phi_over_pi.is_empty() {
        return Err(ModelError::InvalidParameter("empty tuning grid".into()));
    }
    let mut points = Vec::with_capacity(b_ips.len() * phi_over_pi.len());
    for &b in b_ips {
        for &u in phi_over_pi {
            let bias = BiasPoint::new(u * PI, b, 0.0)?;
            let omega = mechanical_frequency(string, squid, &bias, e_j, s_min)?;
            points.push(TuningPoint {
                phi_over_pi: u,
                b_ip_t: b,
                omega_m_hz: omega / (2.0 * PI),
            });
        }
    }
    Ok(TuningCurve { points })
}

impl TuningCurve {
    /// Write as CSV: `phi_over_pi,b_ip_T,omega_m_hz`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phi_over_pi,b_ip_T,omega_m_hz")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.phi_over_pi, p.b_ip_t, p.omega_m_hz)?;
        }
        Ok(())
    }

    /// Parse the `phi_over_pi,b_ip_T,omega_m_hz` CSV form.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| ModelError::Parse("empty tuning CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["phi_over_pi", "b_ip_T", "omega_m_hz"] {
            return Err(ModelError::Parse(format!(
                "line 1: expected header phi_over_pi,b_ip_T,omega_m_hz, got {header:?}"
            )));
        }
        let mut points = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(ModelError::Parse(format!(
                    "line {}: expected 3 fields, got {}",
                    idx + 1,
                    fields.len()
                )));
            }
            let mut vals = [0.0; 3];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f.parse::<f64>().map_err(|e| {
                    ModelError::Parse(format!("line {}: bad number {f:?}: {e}", idx + 1))
                })?;
            }
            points.push(TuningPoint {
                phi_over_pi: vals[0],
                b_ip_t: vals[1],
                omega_m_hz: vals[2],
            });
        }
        if points.is_empty() {
            return Err(ModelError::Parse("tuning CSV has no data rows".into()));
        }
        Ok(Self { points })
    }

    /// Distinct in-plane field values in order of first appearance.
    pub fn fields(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.b_ip_t) {
                out.push(p.b_ip_t);
            }
        }
        out
    }
}
