//! Flux-tunable microwave resonator: lumped LC model with the SQUID as a
//! series Josephson inductance, side-coupled notch transmission, and L/C
//! calibration from the measured frequency extremes.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};

use crate::error::{ModelError, Result};
use crate::squid::{josephson_inductance, s0, SquidParams};

/// Default total cavity linewidth, kappa/2pi = 2.5 MHz.
pub const DEFAULT_KAPPA_TOTAL: f64 = 2.0 * PI * 2.5e6;

/// Lumped-element parameters of the readout resonator.
///
/// Loss rates are angular (rad/s) internally; the JSON form carries them in
/// Hz under `kappa_int_hz` / `kappa_ext_hz` together with `l_H` and `c_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ResonatorParamsJson", into = "ResonatorParamsJson")]
pub struct ResonatorParams {
    /// Lumped geometric inductance (H).
    pub l: f64,
    /// Lumped capacitance (F).
    pub c: f64,
    /// Internal loss rate (rad/s).
    pub kappa_int: f64,
    /// External coupling rate (rad/s).
    pub kappa_ext: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResonatorParamsJson {
    #[serde(rename = "l_H")]
    l_h: f64,
    #[serde(rename = "c_F")]
    c_f: f64,
    kappa_int_hz: f64,
    kappa_ext_hz: f64,
}

impl From<ResonatorParamsJson> for ResonatorParams {
    fn from(j: ResonatorParamsJson) -> Self {
        Self {
            l: j.l_h,
            c: j.c_f,
            kappa_int: 2.0 * PI * j.kappa_int_hz,
            kappa_ext: 2.0 * PI * j.kappa_ext_hz,
        }
    }
}

impl From<ResonatorParams> for ResonatorParamsJson {
    fn from(p: ResonatorParams) -> Self {
        Self {
            l_h: p.l,
            c_f: p.c,
            kappa_int_hz: p.kappa_int / (2.0 * PI),
            kappa_ext_hz: p.kappa_ext / (2.0 * PI),
        }
    }
}

impl ResonatorParams {
    pub fn new(l: f64, c: f64, kappa_int: f64, kappa_ext: f64) -> Result<Self> {
        let p = Self { l, c, kappa_int, kappa_ext };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.c > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "L and C must be > 0, got ({}, {})",
                self.l, self.c
            )));
        }
        if !(self.kappa_int >= 0.0 && self.kappa_ext > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "need kappa_int >= 0 and kappa_ext > 0, got ({}, {})",
                self.kappa_int, self.kappa_ext
            )));
        }
        Ok(())
    }

    /// Total linewidth kappa = kappa_int + kappa_ext (rad/s).
    pub fn kappa(&self) -> f64 {
        self.kappa_int + self.kappa_ext
    }

    /// Replace the loss rates, keeping L and C.
    pub fn with_kappa(mut self, kappa_int: f64, kappa_ext: f64) -> Result<Self> {
        self.kappa_int = kappa_int;
        self.kappa_ext = kappa_ext;
        self.validate()?;
        Ok(self)
    }
}

/// Resonance frequency of the loaded resonator,
/// omega_c = 1 / sqrt(C (L + L_J)) (rad/s). Monotonically decreasing in L_J.
pub fn cavity_frequency(res: &ResonatorParams, lj: f64) -> f64 {
    1.0 / (res.c * (res.l + lj)).sqrt()
}

/// Solve the lumped model for (L, C) given the two calibration endpoints:
/// `omega_max` at `L_J = lj_min` (zero flux) and `omega_min` at
/// `L_J = lj_min / S0(phi_edge, alpha)`.
///
/// Loss rates default to a total of [`DEFAULT_KAPPA_TOTAL`] split equally;
/// override with [`ResonatorParams::with_kappa`].
pub fn calibrate_lc(
    omega_max: f64,
    omega_min: f64,
    lj_min: f64,
    phi_edge: f64,
    alpha: f64,
) -> Result<ResonatorParams> {
    if !(omega_max > omega_min && omega_min > 0.0) {
        return Err(ModelError::Calibration(format!(
            "need omega_max > omega_min > 0, got ({omega_max}, {omega_min})"
        )));
    }
    if !(lj_min > 0.0) {
        return Err(ModelError::Calibration(format!(
            "need lj_min > 0, got {lj_min}"
        )));
    }
    let s_edge = s0(phi_edge, alpha);
    if s_edge <= 0.0 {
        return Err(ModelError::Calibration(format!(
            "S0 vanishes at the calibration edge phi_edge = {phi_edge}"
        )));
    }
    let lj_edge = lj_min / s_edge;
    let ratio = (omega_max / omega_min).powi(2);
    let l = (lj_edge - ratio * lj_min) / (ratio - 1.0);
    if !(l > 0.0 && l.is_finite()) {
        return Err(ModelError::Calibration(format!(
            "no positive geometric inductance solves the endpoints (L = {l})"
        )));
    }
    let c = 1.0 / (omega_max * omega_max * (l + lj_min));
    if !(c > 0.0 && c.is_finite()) {
        return Err(ModelError::Calibration(format!(
            "no positive capacitance solves the endpoints (C = {c})"
        )));
    }
    ResonatorParams::new(l, c, DEFAULT_KAPPA_TOTAL / 2.0, DEFAULT_KAPPA_TOTAL / 2.0)
}

/// Complex transmission of the side-coupled notch resonator,
/// S21(omega) = 1 - (kappa_ext/2) / (i (omega - omega_c) + kappa/2).
pub fn s21(omega: f64, res: &ResonatorParams, omega_c: f64) -> Complex<f64> {
    let den = Complex::new(res.kappa() / 2.0, omega - omega_c);
    Complex::new(1.0, 0.0) - res.kappa_ext / 2.0 / den
}

/// Transmitted power |S21|^2.
pub fn s21_sq(omega: f64, res: &ResonatorParams, omega_c: f64) -> f64 {
    s21(omega, res, omega_c).norm_sqr()
}

/// |S21|^2 over a (flux, frequency) grid.
///
/// Rows follow `phi_over_pi`, columns follow `freq_hz`. The dip locus tracks
/// `cavity_frequency(L_J(phi_b))` and is pi-periodic in the flux bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSweepMap {
    /// Normalized flux grid (units of pi radians, i.e. Phi_b in Phi0/... ).
    pub phi_over_pi: Vec<f64>,
    /// Probe frequency grid (Hz).
    pub freq_hz: Vec<f64>,
    /// s21_sq[i][j] at (phi_over_pi[i], freq_hz[j]).
    pub s21_sq: Vec<Vec<f64>>,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(ModelError::InvalidParameter(format!("{name} grid is empty")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ModelError::InvalidParameter(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

/// Evaluate the transmission map over the given grids.
pub fn flux_sweep_map(
    res: &ResonatorParams,
    squid: &SquidParams,
    phi_over_pi: &[f64],
    freq_hz: &[f64],
) -> Result<FluxSweepMap> {
    check_grid("phi_over_pi", phi_over_pi)?;
    check_grid("freq_hz", freq_hz)?;
    res.validate()?;
    squid.validate()?;
    let mut rows = Vec::with_capacity(phi_over_pi.len());
    for &u in phi_over_pi {
        let lj = josephson_inductance(squid, u * PI)?;
        let omega_c = cavity_frequency(res, lj);
        let row = freq_hz
            .iter()
            .map(|&f| s21_sq(2.0 * PI * f, res, omega_c))
            .collect();
        rows.push(row);
    }
    Ok(FluxSweepMap {
        phi_over_pi: phi_over_pi.to_vec(),
        freq_hz: freq_hz.to_vec(),
        s21_sq: rows,
    })
}

impl FluxSweepMap {
    /// Probe frequency (Hz) of the transmission minimum in row `i`.
    pub fn dip_frequency_hz(&self, i: usize) -> f64 {
        let row = &self.s21_sq[i];
        let (j, _) = row
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
        self.freq_hz[j]
    }

    /// Write the map as CSV: `phi_over_pi,freq_hz,s21_sq`, one record per cell.
    pub fn to_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phi_over_pi,freq_hz,s21_sq")?;
        for (i, &u) in self.phi_over_pi.iter().enumerate() {
            for (j, &f) in self.freq_hz.iter().enumerate() {
                writeln!(w, "{},{},{}", u, f, self.s21_sq[i][j])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA_MAX: f64 = 2.0 * PI * 7.45e9;
    const OMEGA_MIN: f64 = 2.0 * PI * 6.6e9;
    const LJ_MIN: f64 = 0.36e-9;
    const PHI_EDGE: f64 = 0.45 * PI;
    const ALPHA: f64 = 0.01;

    fn calibrated() -> ResonatorParams {
        calibrate_lc(OMEGA_MAX, OMEGA_MIN, LJ_MIN, PHI_EDGE, ALPHA).unwrap()
    }

    #[test]
    fn calibration_reproduces_endpoints() {
        let res = calibrated();
        let f_max = cavity_frequency(&res, LJ_MIN);
        assert!((f_max - OMEGA_MAX).abs() / OMEGA_MAX < 1e-9);
        let lj_edge = LJ_MIN / s0(PHI_EDGE, ALPHA);
        let f_min = cavity_frequency(&res, lj_edge);
        assert!((f_min - OMEGA_MIN).abs() / OMEGA_MIN < 1e-9);
    }

    #[test]
    fn calibration_matches_expected_lumped_values() {
        // closed-form solve of the two-endpoint system
        let res = calibrated();
        assert!((res.l - 6.708e-9).abs() / 6.708e-9 < 1e-2, "L = {}", res.l);
        assert!((res.c - 64.57e-15).abs() / 64.57e-15 < 1e-2, "C = {}", res.c);
    }

    #[test]
    fn calibration_rejects_degenerate_endpoints() {
        assert!(calibrate_lc(OMEGA_MAX, OMEGA_MAX, LJ_MIN, PHI_EDGE, ALPHA).is_err());
        assert!(calibrate_lc(OMEGA_MAX, OMEGA_MIN, 0.0, PHI_EDGE, ALPHA).is_err());
        // endpoint ratio too large for any positive geometric inductance
        assert!(calibrate_lc(OMEGA_MAX, OMEGA_MAX / 10.0, LJ_MIN, PHI_EDGE, ALPHA).is_err());
    }

    #[test]
    fn cavity_frequency_limits() {
        let res = calibrated();
        let f0 = cavity_frequency(&res, LJ_MIN);
        assert!(cavity_frequency(&res, 1e3) < 1e-3 * f0); // L_J -> infinity
        assert!(cavity_frequency(&res, 2.0 * LJ_MIN) < f0); // monotone decrease
        let lj_second = 2.297e-9;
        let f_low = cavity_frequency(&res, lj_second);
        assert!((f_low - 2.0 * PI * 6.6e9).abs() / (2.0 * PI * 6.6e9) < 1e-3);
    }

    #[test]
    fn notch_landmarks() {
        let kappa = DEFAULT_KAPPA_TOTAL;
        let res = ResonatorParams::new(6.7e-9, 64.6e-15, 0.0, kappa).unwrap();
        let omega_c = cavity_frequency(&res, LJ_MIN);
        // critically coupled lossless notch vanishes on resonance
        assert!(s21(omega_c, &res, omega_c).norm() < 1e-14);
        // off-resonant transparency
        assert!((s21(omega_c + 1e4 * kappa, &res, omega_c).norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dip_depth_and_width() {
        let res = calibrated(); // kappa_int = kappa_ext
        let omega_c = cavity_frequency(&res, LJ_MIN);
        let kappa = res.kappa();
        let min = s21_sq(omega_c, &res, omega_c);
        let expected = (res.kappa_int / kappa).powi(2);
        assert!((min - expected).abs() < 1e-9);

        // numeric FWHM of the 1 - |S21|^2 dip on a fine grid
        let depth = 1.0 - min;
        let half = 1.0 - depth / 2.0;
        let mut lo = None;
        let mut hi = None;
        let n = 400_001;
        for i in 0..n {
            let omega = omega_c - 4.0 * kappa + 8.0 * kappa * i as f64 / (n - 1) as f64;
            let v = s21_sq(omega, &res, omega_c);
            if v < half {
                if lo.is_none() {
                    lo = Some(omega);
                }
                hi = Some(omega);
            }
        }
        let fwhm = hi.unwrap() - lo.unwrap();
        assert!((fwhm - kappa).abs() / kappa < 1e-3, "fwhm = {fwhm}, kappa = {kappa}");
    }

    #[test]
    fn passivity_over_grid() {
        let res = calibrated();
        let omega_c = cavity_frequency(&res, LJ_MIN);
        for i in 0..10_000 {
            let omega = omega_c - 50.0 * res.kappa() + 100.0 * res.kappa() * i as f64 / 9_999.0;
            assert!(s21_sq(omega, &res, omega_c) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn sweep_map_dip_locus() {
        let res = calibrated();
        let squid = SquidParams::from_lj_min(LJ_MIN, ALPHA, 20e-6, 0.9).unwrap();
        let phi: Vec<f64> = (0..91).map(|i| -0.45 + 0.9 * i as f64 / 90.0).collect();
        let freq: Vec<f64> = (0..451).map(|i| 6.5e9 + 1.05e9 * i as f64 / 450.0).collect();
        let map = flux_sweep_map(&res, &squid, &phi, &freq).unwrap();

        // dip at zero flux sits at the 7.45 GHz endpoint
        let i0 = phi.iter().position(|&u| u.abs() < 1e-12).unwrap();
        let dip0 = map.dip_frequency_hz(i0);
        assert!((dip0 - 7.45e9).abs() < 3e6, "dip at zero flux {dip0}");

        // monotone decrease of the dip frequency for phi in [0, 0.45 pi]
        let mut prev = f64::INFINITY;
        for (i, &u) in phi.iter().enumerate() {
            if u < 0.0 {
                continue;
            }
            let d = map.dip_frequency_hz(i);
            assert!(d <= prev + 1e-6, "dip not monotone at phi/pi = {u}");
            prev = d;
        }
    }

    #[test]
    fn sweep_map_pi_periodic() {
        let res = calibrated();
        let squid = SquidParams::from_lj_min(LJ_MIN, ALPHA, 20e-6, 0.9).unwrap();
        for i in 0..50 {
            let u = -0.45 + 0.9 * i as f64 / 49.0;
            let lj_a = josephson_inductance(&squid, u * PI).unwrap();
            let lj_b = josephson_inductance(&squid, u * PI + PI).unwrap();
            let fa = cavity_frequency(&res, lj_a);
            let fb = cavity_frequency(&res, lj_b);
            assert!((fa - fb).abs() / fa < 1e-9);
        }
    }

    #[test]
    fn sweep_map_rejects_bad_grids() {
        let res = calibrated();
        let squid = SquidParams::from_lj_min(LJ_MIN, ALPHA, 20e-6, 0.9).unwrap();
        assert!(flux_sweep_map(&res, &squid, &[], &[1.0, 2.0]).is_err());
        assert!(flux_sweep_map(&res, &squid, &[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(flux_sweep_map(&res, &squid, &[0.0, 0.1], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn csv_schema() {
        let map = FluxSweepMap {
            phi_over_pi: vec![0.0, 0.1],
            freq_hz: vec![1.0e9, 2.0e9],
            s21_sq: vec![vec![0.5, 0.6], vec![0.7, 0.8]],
        };
        let mut out = Vec::new();
        map.to_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "phi_over_pi,freq_hz,s21_sq");
        assert_eq!(lines.next().unwrap(), "0,1000000000,0.5");
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn resonator_json_keys() {
        let res = calibrated();
        let json = serde_json::to_string(&res).unwrap();
        for key in ["l_H", "c_F", "kappa_int_hz", "kappa_ext_hz"] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: ResonatorParams = serde_json::from_str(&json).unwrap();
        assert!((back.kappa() - res.kappa()).abs() / res.kappa() < 1e-12);
    }
}
