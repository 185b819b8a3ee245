//! Thermal-sideband power spectral densities: area-normalized Lorentzian
//! synthesis with averaged-periodogram noise, and Lorentzian peak fitting to
//! extract the mechanical frequency and linewidth.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};
use crate::estimation::{least_squares, FitProblem, ModelFn};
use crate::mechanics::{thermal_scales, StringParams};
use crate::squid::BiasPoint;

/// Frequency-indexed voltage PSD trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTrace {
    /// Strictly increasing frequency grid (Hz).
    pub freqs: Vec<f64>,
    /// Non-negative PSD samples (V^2/Hz).
    pub psd: Vec<f64>,
    /// Number of averaged periodograms behind each bin.
    pub n_avg: u32,
    pub meta: TraceMeta,
}

/// Provenance metadata carried alongside a trace (JSON sidecar).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bias: Option<BiasPoint>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe_power_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stab_power_w: Option<f64>,
}

impl SpectrumTrace {
    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() != self.psd.len() {
            return Err(ModelError::InvalidParameter(format!(
                "freqs ({}) and psd ({}) lengths differ",
                self.freqs.len(),
                self.psd.len()
            )));
        }
        if self.freqs.len() < 2 {
            return Err(ModelError::InvalidParameter(
                "trace needs at least 2 bins".into(),
            ));
        }
        if self.freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ModelError::InvalidParameter(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        if self.psd.iter().any(|&v| !(v >= 0.0)) {
            return Err(ModelError::InvalidParameter(
                "psd values must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Write as CSV: `freq_hz,psd_v2_per_hz`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "freq_hz,psd_v2_per_hz")?;
        for (f, p) in self.freqs.iter().zip(&self.psd) {
            writeln!(w, "{},{}", f, p)?;
        }
        Ok(())
    }

    /// Parse the `freq_hz,psd_v2_per_hz` CSV form (metadata not included).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| ModelError::Parse("empty spectrum CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["freq_hz", "psd_v2_per_hz"] {
            return Err(ModelError::Parse(format!(
                "line 1: expected header freq_hz,psd_v2_per_hz, got {header:?}"
            )));
        }
        let mut freqs = Vec::new();
        let mut psd = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(ModelError::Parse(format!(
                    "line {}: expected 2 fields, got {}",
                    idx + 1,
                    fields.len()
                )));
            }
            let f: f64 = fields[0]
                .parse()
                .map_err(|e| ModelError::Parse(format!("line {}: {e}", idx + 1)))?;
            let p: f64 = fields[1]
                .parse()
                .map_err(|e| ModelError::Parse(format!("line {}: {e}", idx + 1)))?;
            freqs.push(f);
            psd.push(p);
        }
        let trace = Self { freqs, psd, n_avg: 1, meta: TraceMeta::default() };
        trace.validate()?;
        Ok(trace)
    }
}

/// Area-normalized Lorentzian plus flat floor:
/// psd(f) = floor + (2 area / pi) * fwhm / (4 (f - center)^2 + fwhm^2).
///
/// The peak height above the floor is 2 area / (pi fwhm) and the integral of
/// psd - floor over all frequencies equals `area`.
pub fn lorentzian_psd(
    freq_grid: &[f64],
    center: f64,
    fwhm: f64,
    area: f64,
    floor: f64,
) -> Result<SpectrumTrace> {
    if !(fwhm > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "fwhm must be > 0, got {fwhm}"
        )));
    }
    let psd: Vec<f64> = freq_grid
        .iter()
        .map(|&f| lorentzian_value(f, center, fwhm, area, floor))
        .collect();
    let trace = SpectrumTrace {
        freqs: freq_grid.to_vec(),
        psd,
        n_avg: u32::MAX, // noiseless limit
        meta: TraceMeta::default(),
    };
    trace.validate()?;
    Ok(trace)
}

fn lorentzian_value(f: f64, center: f64, fwhm: f64, area: f64, floor: f64) -> f64 {
    let d = f - center;
    floor + (2.0 * area / PI) * fwhm / (4.0 * d * d + fwhm * fwhm)
}

/// Synthesize a thermal displacement spectrum around the string resonance.
///
/// The expected PSD is the area-normalized Lorentzian centered at
/// `omega0/2pi` with width `gamma_m/2pi`, area `gain^2 <x^2>` from the
/// classical thermal scales, on top of `floor`. Every bin is multiplied by an
/// independent Gamma(n_avg, 1/n_avg) variate, the statistics of an average of
/// `n_avg` periodograms. Deterministic for a given `seed`.
pub fn synth_thermal_spectrum(
    string: &StringParams,
    t: f64,
    transduction_gain: f64,
    freq_grid: &[f64],
    floor: f64,
    n_avg: u32,
    seed: u64,
) -> Result<SpectrumTrace> {
    if n_avg < 1 {
        return Err(ModelError::InvalidParameter("n_avg must be >= 1".into()));
    }
    if !(transduction_gain > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "transduction gain must be > 0, got {transduction_gain}"
        )));
    }
    let (x_sq, _) = thermal_scales(string, t)?;
    let area = transduction_gain * transduction_gain * x_sq;
    let center = string.omega0 / (2.0 * PI);
    let fwhm = string.gamma_m / (2.0 * PI);
    let mut trace = lorentzian_psd(freq_grid, center, fwhm, area, floor)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(n_avg as f64, 1.0 / n_avg as f64)
        .map_err(|e| ModelError::InvalidParameter(format!("gamma sampler: {e}")))?;
    for v in &mut trace.psd {
        *v *= gamma.sample(&mut rng);
    }
    trace.n_avg = n_avg;
    trace.meta.seed = Some(seed);
    Ok(trace)
}

/// Lorentzian fit result. JSON keys: `center_hz`, `fwhm_hz`, `area_v2`,
/// `floor_v2_per_hz`, the matching `stderr_*` entries, `converged`,
/// `iterations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzFit {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    #[serde(rename = "area_v2")]
    pub area: f64,
    #[serde(rename = "floor_v2_per_hz")]
    pub floor: f64,
    pub stderr_center_hz: f64,
    pub stderr_fwhm_hz: f64,
    #[serde(rename = "stderr_area_v2")]
    pub stderr_area: f64,
    #[serde(rename = "stderr_floor_v2_per_hz")]
    pub stderr_floor: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LorentzFit {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_hz > 0.0) || !(self.floor >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "need fwhm > 0 and floor >= 0, got ({}, {})",
                self.fwhm_hz, self.floor
            )));
        }
        if self.stderr_center_hz < 0.0
            || self.stderr_fwhm_hz < 0.0
            || self.stderr_area < 0.0
            || self.stderr_floor < 0.0
        {
            return Err(ModelError::InvalidParameter(
                "standard errors must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Self-initialization: peak bin for the center, half-maximum crossings for
/// the width, edge median for the floor.
fn self_init(trace: &SpectrumTrace) -> Result<LorentzFit> {
    let n = trace.freqs.len();
    let edge = (n / 20).max(3).min(n / 2);
    let mut edges: Vec<f64> = trace.psd[..edge]
        .iter()
        .chain(&trace.psd[n - edge..])
        .copied()
        .collect();
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let floor = edges[edges.len() / 2];

    let (peak_idx, &peak) = trace
        .psd
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("validated non-empty");
    let height = peak - floor;
    if !(height > 0.0) || height <= 10.0 * f64::EPSILON * floor.abs() {
        return Err(ModelError::Degenerate(
            "trace has no peak above the floor".into(),
        ));
    }
    let half = floor + height / 2.0;

    let mut lo = trace.freqs[0];
    for i in (0..peak_idx).rev() {
        if trace.psd[i] < half {
            // linear interpolation between bins i and i+1
            let t = (half - trace.psd[i]) / (trace.psd[i + 1] - trace.psd[i]);
            lo = trace.freqs[i] + t * (trace.freqs[i + 1] - trace.freqs[i]);
            break;
        }
    }
    let mut hi = trace.freqs[n - 1];
    for i in peak_idx + 1..n {
        if trace.psd[i] < half {
            let t = (trace.psd[i - 1] - half) / (trace.psd[i - 1] - trace.psd[i]);
            hi = trace.freqs[i - 1] + t * (trace.freqs[i] - trace.freqs[i - 1]);
            break;
        }
    }
    let fwhm = (hi - lo).max(trace.freqs[1] - trace.freqs[0]);

    Ok(LorentzFit {
        center_hz: trace.freqs[peak_idx],
        fwhm_hz: fwhm,
        area: height * PI * fwhm / 2.0,
        floor: floor.max(0.0),
        stderr_center_hz: 0.0,
        stderr_fwhm_hz: 0.0,
        stderr_area: 0.0,
        stderr_floor: 0.0,
        converged: false,
        iterations: 0,
    })
}

/// Build the least-squares problem behind [`fit_lorentzian`] without solving
/// it. Without an explicit `init` the problem self-initializes from the peak
/// bin, the half-maximum crossings and the edge median. The trace must span
/// at least five expected linewidths.
///
/// The center is parameterized as `center_offset_hz`, the offset from the
/// first grid frequency: the absolute center (MHz scale) would make the
/// relative finite-difference steps coarse against the linewidth (Hz scale).
pub fn lorentzian_problem(trace: &SpectrumTrace, init: Option<&LorentzFit>) -> Result<FitProblem> {
    trace.validate()?;
    let start = match init {
        Some(i) => {
            i.validate()?;
            i.clone()
        }
        None => self_init(trace)?,
    };
    let span = trace.freqs[trace.freqs.len() - 1] - trace.freqs[0];
    if span < 5.0 * start.fwhm_hz {
        return Err(ModelError::InvalidParameter(format!(
            "trace span {span} Hz is below 5x the expected fwhm {}",
            start.fwhm_hz
        )));
    }

    let f_lo = trace.freqs[0];
    let model: ModelFn =
        Arc::new(move |p: &[f64], f: f64| lorentzian_value(f, f_lo + p[0], p[1], p[2], p[3]));
    let data: Vec<(f64, f64, f64)> = trace
        .freqs
        .iter()
        .zip(&trace.psd)
        .map(|(&f, &p)| (f, p, 1.0))
        .collect();
    Ok(FitProblem::new(
        model,
        data,
        vec![start.center_hz - f_lo, start.fwhm_hz, start.area, start.floor],
    )
    .with_names(&["center_offset_hz", "fwhm_hz", "area_v2", "floor_v2_per_hz"])
    .with_bounds(vec![
        (0.0, span),
        (f64::MIN_POSITIVE, 10.0 * span),
        (0.0, f64::INFINITY),
        (0.0, f64::INFINITY),
    ]))
}

/// Fit the area-normalized Lorentzian to a trace by damped least squares.
/// A fit that hits the iteration cap is returned with `converged = false`.
pub fn fit_lorentzian(trace: &SpectrumTrace, init: Option<&LorentzFit>) -> Result<LorentzFit> {
    let report = least_squares(&lorentzian_problem(trace, init)?)?;
    let f_lo = trace.freqs[0];
    let fit = LorentzFit {
        center_hz: f_lo + report.param_values[0],
        fwhm_hz: report.param_values[1],
        area: report.param_values[2],
        floor: report.param_values[3],
        stderr_center_hz: report.stderr_values[0],
        stderr_fwhm_hz: report.stderr_values[1],
        stderr_area: report.stderr_values[2],
        stderr_floor: report.stderr_values[3],
        converged: report.converged,
        iterations: report.iterations,
    };
    fit.validate()?;
    Ok(fit)
}

/// Quality factor Q = center / fwhm.
pub fn q_factor(center: f64, fwhm: f64) -> f64 {
    center / fwhm
}
