//! JSON run configuration. Every physical key carries its SI unit in the
//! name; unknown keys are rejected. Missing sections fall back to the device
//! defaults.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use squidmech_core::fluxlock::{LockConfig, DEFAULT_DETUNING_HZ};
use squidmech_core::mechanics::{StringParams, DEFAULT_S_MIN};
use squidmech_core::squid::SquidParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub squid: SquidParams,
    pub string: StringParams,
    pub resonator: ResonatorConfig,
    pub bias: BiasConfig,
    pub mechanics: MechanicsConfig,
    pub spectra: SpectraConfig,
    pub tune: TuneConfig,
    pub sweep: SweepConfig,
    pub lock: LockSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 12345,
            squid: SquidParams::from_lj_min(0.36e-9, 0.01, 20e-6, 0.9)
                .expect("default squid parameters"),
            string: StringParams::new(
                0.6e-15,
                2.0 * PI * 5.8e6,
                2.0 * PI * 20.0,
                20e-6,
                0.2e-6,
                0.11e-6,
                2700.0,
            )
            .expect("default string parameters"),
            resonator: ResonatorConfig::default(),
            bias: BiasConfig::default(),
            mechanics: MechanicsConfig::default(),
            spectra: SpectraConfig::default(),
            tune: TuneConfig::default(),
            sweep: SweepConfig::default(),
            lock: LockSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonatorConfig {
    pub omega_max_hz: f64,
    pub omega_min_hz: f64,
    #[serde(rename = "lj_min_H")]
    pub lj_min_h: f64,
    pub phi_edge_over_pi: f64,
    /// Total linewidth kappa/2pi (Hz).
    pub kappa_hz: f64,
    /// Fraction of kappa assigned to the external coupling.
    pub kappa_ext_fraction: f64,
}

impl Default for ResonatorConfig {
    fn default() -> Self {
        Self {
            omega_max_hz: 7.45e9,
            omega_min_hz: 6.6e9,
            lj_min_h: 0.36e-9,
            phi_edge_over_pi: 0.45,
            kappa_hz: 2.5e6,
            kappa_ext_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasConfig {
    pub phi_over_pi: f64,
    #[serde(rename = "b_ip_T")]
    pub b_ip_t: f64,
    #[serde(rename = "b_oop_T")]
    pub b_oop_t: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self { phi_over_pi: 0.2, b_ip_t: 35e-3, b_oop_t: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechanicsConfig {
    /// Lower guard on the SQUID screening factor S0.
    pub s_min: f64,
}

impl Default for MechanicsConfig {
    fn default() -> Self {
        Self { s_min: DEFAULT_S_MIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraConfig {
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    pub gain_v_per_m: f64,
    pub floor_v2_per_hz: f64,
    pub n_avg: u32,
    pub span_hz: f64,
    pub points: usize,
    /// Probe / stabilizer tone powers, carried as trace metadata only.
    #[serde(rename = "probe_power_W")]
    pub probe_power_w: f64,
    #[serde(rename = "stab_power_W")]
    pub stab_power_w: f64,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            temperature_k: 85e-3,
            gain_v_per_m: 1e9,
            floor_v2_per_hz: 1e-15,
            n_avg: 100,
            span_hz: 1500.0,
            points: 3001,
            probe_power_w: 1.5e-15,
            stab_power_w: 0.5e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    #[serde(rename = "b_ip_list_T")]
    pub b_ip_list_t: Vec<f64>,
    pub phi_min_over_pi: f64,
    pub phi_max_over_pi: f64,
    pub points: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            b_ip_list_t: vec![6.2e-3, 35e-3],
            phi_min_over_pi: -0.45,
            phi_max_over_pi: 0.45,
            points: 91,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub phi_min_over_pi: f64,
    pub phi_max_over_pi: f64,
    pub phi_points: usize,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub freq_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            phi_min_over_pi: -0.75,
            phi_max_over_pi: 0.75,
            phi_points: 121,
            freq_min_hz: 6.5e9,
            freq_max_hz: 7.55e9,
            freq_points: 241,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockSettings {
    pub dt_s: f64,
    pub tau_s: f64,
    pub sigma_phi0: f64,
    pub detuning_hz: f64,
    pub kp: f64,
    pub ki: f64,
    pub setpoint_phi_over_pi: f64,
    pub steps: usize,
    pub sensor_noise: f64,
}

impl Default for LockSettings {
    fn default() -> Self {
        Self {
            dt_s: 10e-3,
            tau_s: 10.0,
            sigma_phi0: 0.005,
            detuning_hz: DEFAULT_DETUNING_HZ,
            kp: 0.005,
            ki: 1.2,
            setpoint_phi_over_pi: 0.1,
            steps: 30_000,
            sensor_noise: 0.0,
        }
    }
}

impl LockSettings {
    pub fn to_lock_config(&self, seed: u64) -> LockConfig {
        LockConfig {
            dt: self.dt_s,
            tau: self.tau_s,
            sigma_phi0: self.sigma_phi0,
            detuning_hz: self.detuning_hz,
            kp: self.kp,
            ki: self.ki,
            setpoint_phi_b: self.setpoint_phi_over_pi * PI,
            steps: self.steps,
            seed,
            sensor_noise: self.sensor_noise,
        }
    }
}

/// Grid helper: `n` evenly spaced points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
