//! Discrete-time simulation of the active flux stabilization: ambient flux
//! drift as an Ornstein-Uhlenbeck process, the stabilizer-tone transmission
//! as error signal, and a PI controller acting through the out-of-plane coil
//! with one step of actuation delay.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{cavity_frequency, s21_sq, ResonatorParams};
use crate::error::{ModelError, Result};
use crate::squid::{josephson_inductance, SquidParams};

/// Default stabilizer-tone detuning above the setpoint resonance (Hz).
pub const DEFAULT_DETUNING_HZ: f64 = 500e3;

/// Feedback-loop configuration.
///
/// JSON keys: `dt_s`, `tau_s`, `sigma_phi0`, `detuning_hz`, `kp`, `ki`,
/// `setpoint_phi_b_rad`, `steps`, `seed`, `sensor_noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    /// Control-loop step (s).
    #[serde(rename = "dt_s")]
    pub dt: f64,
    /// Drift mean-reversion time (s).
    #[serde(rename = "tau_s")]
    pub tau: f64,
    /// Stationary drift standard deviation (units of Phi0).
    pub sigma_phi0: f64,
    /// Stabilizer tone offset from the setpoint resonance (Hz).
    pub detuning_hz: f64,
    /// Proportional gain (Phi0 per error-signal unit).
    pub kp: f64,
    /// Integral gain (Phi0 per error-signal unit per second).
    pub ki: f64,
    /// Flux setpoint, normalized bias flux (rad).
    #[serde(rename = "setpoint_phi_b_rad")]
    pub setpoint_phi_b: f64,
    /// Run length in steps.
    pub steps: usize,
    pub seed: u64,
    /// Additive error-signal noise standard deviation (dimensionless).
    pub sensor_noise: f64,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            dt: 10e-3,
            tau: 10.0,
            sigma_phi0: 0.005,
            detuning_hz: DEFAULT_DETUNING_HZ,
            kp: 0.005,
            ki: 1.2,
            setpoint_phi_b: 0.1 * PI,
            steps: 30_000,
            seed: 1234,
            sensor_noise: 0.0,
        }
    }
}

impl LockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.tau > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "need dt > 0 and tau > 0, got ({}, {})",
                self.dt, self.tau
            )));
        }
        if !(self.sigma_phi0 >= 0.0 && self.sensor_noise >= 0.0) {
            return Err(ModelError::InvalidParameter(
                "noise amplitudes must be >= 0".into(),
            ));
        }
        if self.steps < 1 {
            return Err(ModelError::InvalidParameter("run length must be >= 1".into()));
        }
        if !(self.detuning_hz.is_finite()
            && self.kp.is_finite()
            && self.ki.is_finite()
            && self.setpoint_phi_b.is_finite())
        {
            return Err(ModelError::InvalidParameter(
                "lock parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Number of leading steps discarded from the RMS summary (10 tau).
    pub fn warmup_steps(&self) -> usize {
        (10.0 * self.tau / self.dt).ceil() as usize
    }
}

/// Ambient flux drift: exact Ornstein-Uhlenbeck discretization
/// `Phi_{n+1} = Phi_n e^(-dt/tau) + sigma sqrt(1 - e^(-2 dt/tau)) xi_n`
/// started from zero, in units of Phi0. Stationary variance is sigma^2.
pub fn drift_process(config: &LockConfig, n: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let decay = (-config.dt / config.tau).exp();
    let innovation = config.sigma_phi0 * (1.0 - decay * decay).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = 0.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = StandardNormal.sample(&mut rng);
        state = state * decay + innovation * xi;
        out.push(state);
    }
    Ok(out)
}

/// Stabilizer tone frequency and setpoint transmission for the given circuit.
fn stabilizer_reference(
    config: &LockConfig,
    res: &ResonatorParams,
    squid: &SquidParams,
) -> Result<(f64, f64)> {
    let lj_set = josephson_inductance(squid, config.setpoint_phi_b)?;
    let omega_set = cavity_frequency(res, lj_set);
    let omega_stab = omega_set + 2.0 * PI * config.detuning_hz;
    let reference = s21_sq(omega_stab, res, omega_set);
    Ok((omega_stab, reference))
}

/// Deviation of the stabilizer-tone transmission from its setpoint value for
/// the given total loop flux (units of Phi0). Zero at the setpoint and
/// monotone in the flux error for small errors on one flank.
pub fn error_signal(
    total_flux_phi0: f64,
    config: &LockConfig,
    res: &ResonatorParams,
    squid: &SquidParams,
) -> Result<f64> {
    let (omega_stab, reference) = stabilizer_reference(config, res, squid)?;
    let lj = josephson_inductance(squid, PI * total_flux_phi0)?;
    let omega_c = cavity_frequency(res, lj);
    Ok(s21_sq(omega_stab, res, omega_c) - reference)
}

/// One step of the loop record. The bookkeeping identity
/// `residual = drift - correction` holds exactly at every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockStep {
    pub drift_phi0: f64,
    pub correction_phi0: f64,
    pub residual_phi0: f64,
    pub error_signal: f64,
}

/// Full per-step record of a lock run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LockTrace {
    pub steps: Vec<LockStep>,
}

impl LockTrace {
    /// Write as CSV: `step,drift_phi0,correction_phi0,residual_phi0,error_signal`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,drift_phi0,correction_phi0,residual_phi0,error_signal")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                i, s.drift_phi0, s.correction_phi0, s.residual_phi0, s.error_signal
            )?;
        }
        Ok(())
    }
}

/// RMS summary of a lock run, computed after the warm-up window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockSummary {
    pub open_loop_rms: f64,
    pub closed_loop_rms: f64,
    pub suppression_factor: f64,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v * v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Run the feedback loop over the configured number of steps.
///
/// Per step: measure the error signal of the current residual flux, update
/// the PI state, and apply the resulting correction at the next step. The
/// summary discards a 10 tau warm-up. A residual RMS growing beyond
/// 10 sigma_phi0 aborts with an instability error carrying the gains.
pub fn run_lock(
    config: &LockConfig,
    res: &ResonatorParams,
    squid: &SquidParams,
) -> Result<(LockTrace, LockSummary)> {
    config.validate()?;
    let warmup = config.warmup_steps();
    if config.steps <= warmup {
        return Err(ModelError::InvalidParameter(format!(
            "run length {} does not outlast the {warmup}-step warm-up",
            config.steps
        )));
    }
    let (omega_stab, reference) = stabilizer_reference(config, res, squid)?;
    let setpoint_flux = config.setpoint_phi_b / PI;

    let drift = drift_process(config, config.steps)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EB5_0C5E_115E_u64);

    let mut trace = LockTrace { steps: Vec::with_capacity(config.steps) };
    let mut correction = 0.0_f64;
    let mut integral = 0.0_f64;
    let mut post_sum_sq = 0.0_f64;
    let mut post_count = 0usize;

    for (i, &d) in drift.iter().enumerate() {
        let residual = d - correction;
        if !residual.is_finite() {
            return Err(ModelError::LockInstability(format!(
                "non-finite residual at step {i} (kp = {}, ki = {})",
                config.kp, config.ki
            )));
        }
        let lj = josephson_inductance(squid, PI * (setpoint_flux + residual))?;
        let mut err = s21_sq(omega_stab, res, cavity_frequency(res, lj)) - reference;
        if config.sensor_noise > 0.0 {
            let xi: f64 = StandardNormal.sample(&mut noise_rng);
            err += config.sensor_noise * xi;
        }
        integral += err * config.dt;
        trace.steps.push(LockStep {
            drift_phi0: d,
            correction_phi0: correction,
            residual_phi0: residual,
            error_signal: err,
        });

        if i >= warmup {
            post_sum_sq += residual * residual;
            post_count += 1;
            if config.sigma_phi0 > 0.0 {
                let running_rms = (post_sum_sq / post_count as f64).sqrt();
                if running_rms > 10.0 * config.sigma_phi0 {
                    return Err(ModelError::LockInstability(format!(
                        "residual RMS {running_rms} exceeded 10 sigma = {} at step {i} \
                         (kp = {}, ki = {})",
                        10.0 * config.sigma_phi0,
                        config.kp,
                        config.ki
                    )));
                }
            }
        }

        correction = config.kp * err + config.ki * integral;
    }

    let open_loop_rms = rms(trace.steps[warmup..].iter().map(|s| s.drift_phi0));
    let closed_loop_rms = rms(trace.steps[warmup..].iter().map(|s| s.residual_phi0));
    let suppression_factor = if open_loop_rms == 0.0 && closed_loop_rms == 0.0 {
        1.0
    } else {
        open_loop_rms / closed_loop_rms
    };
    Ok((
        trace,
        LockSummary { open_loop_rms, closed_loop_rms, suppression_factor },
    ))
}

/// Coarse grid search over PI gains; returns `(kp, ki, suppression)` of the
/// best stable run. Unstable gain pairs are skipped.
pub fn tune_gains(
    config: &LockConfig,
    res: &ResonatorParams,
    squid: &SquidParams,
    kp_grid: &[f64],
    ki_grid: &[f64],
) -> Result<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &kp in kp_grid {
        for &ki in ki_grid {
            let candidate = LockConfig { kp, ki, ..*config };
            if let Ok((_, summary)) = run_lock(&candidate, res, squid) {
                if best.is_none() || summary.suppression_factor > best.unwrap().2 {
                    best = Some((kp, ki, summary.suppression_factor));
                }
            }
        }
    }
    best.ok_or_else(|| {
        ModelError::NonConvergence("no stable gain pair found on the search grid".into())
    })
}
