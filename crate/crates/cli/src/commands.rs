//! Subcommand implementations.

use serde::Serialize;
use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use squidmech_core::circuit::{calibrate_lc, flux_sweep_map, ResonatorParams};
use squidmech_core::estimation::{fit_flux_tuning, fit_power_law, FitReport};
use squidmech_core::fluxlock::{run_lock, LockConfig};
use squidmech_core::mechanics::{mechanical_frequency, tuning_curves, StringParams, TuningCurve};
use squidmech_core::spectra::{fit_lorentzian, synth_thermal_spectrum, SpectrumTrace};
use squidmech_core::squid::{BiasPoint, SquidParams};
use squidmech_core::ModelError;

use crate::config::{linspace, RunConfig};
use crate::csvio::parse_table;
use crate::svg::{render, PlotKind};

/// Error classes mapped onto process exit codes:
/// 1 usage (bad invocation, unreadable/malformed input), 2 domain (model
/// rejects the operating point), 3 non-convergence.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Domain(_) => 2,
            Self::NonConvergence(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Domain(m) | Self::NonConvergence(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonConvergence(_) | ModelError::LockInstability(_) => {
                Self::NonConvergence(e.to_string())
            }
            ModelError::Parse(_) => Self::Usage(e.to_string()),
            _ => Self::Domain(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Usage(format!("io: {e}"))
    }
}

/// Write a file atomically: write to a sibling temp file, then rename.
fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let tmp = path.with_extension(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{ext}.tmp"),
        None => "tmp".to_string(),
    });
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write to the given path atomically, or to stdout when no path is given.
fn emit(out: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Domain(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Build the calibrated resonator from the config endpoints.
pub fn calibrated_resonator(config: &RunConfig) -> Result<ResonatorParams, CliError> {
    let r = &config.resonator;
    let res = calibrate_lc(
        2.0 * PI * r.omega_max_hz,
        2.0 * PI * r.omega_min_hz,
        r.lj_min_h,
        r.phi_edge_over_pi * PI,
        config.squid.alpha,
    )?;
    let kappa_total = 2.0 * PI * r.kappa_hz;
    let kappa_ext = kappa_total * r.kappa_ext_fraction;
    Ok(res.with_kappa(kappa_total - kappa_ext, kappa_ext)?)
}

pub struct CalibrateArgs {
    pub omega_max_hz: Option<f64>,
    pub omega_min_hz: Option<f64>,
    pub lj_min_h: Option<f64>,
    pub phi_edge_over_pi: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn cmd_calibrate(mut config: RunConfig, args: CalibrateArgs) -> Result<(), CliError> {
    if let Some(v) = args.omega_max_hz {
        config.resonator.omega_max_hz = v;
    }
    if let Some(v) = args.omega_min_hz {
        config.resonator.omega_min_hz = v;
    }
    if let Some(v) = args.lj_min_h {
        config.resonator.lj_min_h = v;
    }
    if let Some(v) = args.phi_edge_over_pi {
        config.resonator.phi_edge_over_pi = v;
    }
    let res = calibrated_resonator(&config)?;
    emit(args.out.as_ref(), &pretty_json(&res)?)
}

pub fn cmd_sweep(config: &RunConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let res = calibrated_resonator(config)?;
    let s = &config.sweep;
    let phi = linspace(s.phi_min_over_pi, s.phi_max_over_pi, s.phi_points);
    let freq = linspace(s.freq_min_hz, s.freq_max_hz, s.freq_points);
    let map = flux_sweep_map(&res, &config.squid, &phi, &freq)?;
    let mut buf = Vec::new();
    map.to_csv(&mut buf)?;
    emit(out.as_ref(), &String::from_utf8_lossy(&buf))
}

#[derive(Serialize)]
struct TuneEcho<'a> {
    seed: u64,
    squid: &'a SquidParams,
    string: &'a StringParams,
    #[serde(rename = "e_j_J")]
    e_j: f64,
    s_min: f64,
    #[serde(rename = "b_ip_list_T")]
    b_ip_list: &'a [f64],
    phi_min_over_pi: f64,
    phi_max_over_pi: f64,
    points: usize,
}

pub fn cmd_tune(
    config: &RunConfig,
    seed: u64,
    out: Option<PathBuf>,
    b_ip_override: Option<Vec<f64>>,
) -> Result<(), CliError> {
    let t = &config.tune;
    let b_ips = b_ip_override.unwrap_or_else(|| t.b_ip_list_t.clone());
    let phi = linspace(t.phi_min_over_pi, t.phi_max_over_pi, t.points);
    let e_j = config.squid.e_j();
    let curve = tuning_curves(
        &config.string,
        &config.squid,
        e_j,
        &b_ips,
        &phi,
        config.mechanics.s_min,
    )?;
    let mut buf = Vec::new();
    curve.to_csv(&mut buf)?;
    emit(out.as_ref(), &String::from_utf8_lossy(&buf))?;
    // JSON echo of the generating parameters alongside every file export
    if let Some(path) = &out {
        let echo = TuneEcho {
            seed,
            squid: &config.squid,
            string: &config.string,
            e_j,
            s_min: config.mechanics.s_min,
            b_ip_list: &b_ips,
            phi_min_over_pi: t.phi_min_over_pi,
            phi_max_over_pi: t.phi_max_over_pi,
            points: t.points,
        };
        write_atomic(&path.with_extension("json"), &pretty_json(&echo)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumSidecar<'a> {
    seed: u64,
    n_avg: u32,
    bias: &'a BiasPoint,
    #[serde(rename = "temperature_K")]
    temperature_k: f64,
    gain_v_per_m: f64,
    floor_v2_per_hz: f64,
    omega_m_hz: f64,
    #[serde(rename = "probe_power_W")]
    probe_power_w: f64,
    #[serde(rename = "stab_power_W")]
    stab_power_w: f64,
}

pub fn cmd_spectrum(config: &RunConfig, seed: u64, out: PathBuf) -> Result<(), CliError> {
    let bias = BiasPoint::new(config.bias.phi_over_pi * PI, config.bias.b_ip_t, config.bias.b_oop_t)?;
    let e_j = config.squid.e_j();
    let omega_m = mechanical_frequency(
        &config.string,
        &config.squid,
        &bias,
        e_j,
        config.mechanics.s_min,
    )?;
    // synthesize in the demodulated frame around the biased mechanical line
    let biased_string = StringParams { omega0: omega_m, ..config.string };
    let sp = &config.spectra;
    let center = omega_m / (2.0 * PI);
    let grid = linspace(center - sp.span_hz / 2.0, center + sp.span_hz / 2.0, sp.points);
    let mut trace = synth_thermal_spectrum(
        &biased_string,
        sp.temperature_k,
        sp.gain_v_per_m,
        &grid,
        sp.floor_v2_per_hz,
        sp.n_avg,
        seed,
    )?;
    trace.meta.bias = Some(bias);
    trace.meta.probe_power_w = Some(sp.probe_power_w);
    trace.meta.stab_power_w = Some(sp.stab_power_w);
    let mut buf = Vec::new();
    trace.to_csv(&mut buf)?;
    write_atomic(&out, &String::from_utf8_lossy(&buf))?;
    let sidecar = SpectrumSidecar {
        seed,
        n_avg: sp.n_avg,
        bias: &bias,
        temperature_k: sp.temperature_k,
        gain_v_per_m: sp.gain_v_per_m,
        floor_v2_per_hz: sp.floor_v2_per_hz,
        omega_m_hz: center,
        probe_power_w: sp.probe_power_w,
        stab_power_w: sp.stab_power_w,
    };
    write_atomic(&out.with_extension("json"), &pretty_json(&sidecar)?)
}

pub fn cmd_fit_lorentz(input: PathBuf, out: Option<PathBuf>) -> Result<(), CliError> {
    let text = fs::read_to_string(&input)?;
    let trace = SpectrumTrace::from_csv(&text)?;
    let fit = fit_lorentzian(&trace, None)?;
    emit(out.as_ref(), &pretty_json(&fit)?)?;
    if !fit.converged {
        return Err(CliError::NonConvergence(format!(
            "Lorentzian fit hit the iteration cap after {} iterations",
            fit.iterations
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct FieldFit {
    #[serde(rename = "b_ip_T")]
    b_ip: f64,
    fit: FitReport,
}

pub fn cmd_fit_tune(
    config: &RunConfig,
    input: PathBuf,
    out: Option<PathBuf>,
    omega0_csv: Option<PathBuf>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(&input)?;
    let curve = TuningCurve::from_csv(&text)?;
    let mut fits: Vec<FieldFit> = Vec::new();
    for b in curve.fields() {
        let points: Vec<(f64, f64, f64)> = curve
            .points
            .iter()
            .filter(|p| p.b_ip_t == b)
            .map(|p| (p.phi_over_pi * PI, 2.0 * PI * p.omega_m_hz, 2.0 * PI))
            .collect();
        let report = fit_flux_tuning(
            &points,
            &config.squid,
            &config.string,
            b,
            config.mechanics.s_min,
        )?;
        fits.push(FieldFit { b_ip: b, fit: report });
    }

    if let Some(path) = &omega0_csv {
        let mut csv = String::from("b_ip_T,omega0_hz\n");
        for f in &fits {
            csv.push_str(&format!(
                "{},{}\n",
                f.b_ip,
                f.fit.param("omega0_hz").unwrap_or(f64::NAN)
            ));
        }
        write_atomic(path, &csv)?;
    }

    let json = if fits.len() == 1 {
        pretty_json(&fits[0].fit)?
    } else {
        pretty_json(&fits)?
    };
    emit(out.as_ref(), &json)?;
    if let Some(bad) = fits.iter().find(|f| !f.fit.converged) {
        return Err(CliError::NonConvergence(format!(
            "flux-tuning fit at B_ip = {} T hit the iteration cap",
            bad.b_ip
        )));
    }
    Ok(())
}

pub fn cmd_fit_powerlaw(
    config: &RunConfig,
    input: PathBuf,
    out: Option<PathBuf>,
    b_ref: Option<f64>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(&input)?;
    let table = parse_table(&text).map_err(CliError::Usage)?;
    let (bs, f0s) = match (table.column("b_ip_T"), table.column("omega0_hz")) {
        (Some(b), Some(f)) => (b, f),
        _ => {
            return Err(CliError::Usage(
                "power-law input needs columns b_ip_T,omega0_hz".into(),
            ))
        }
    };
    let points: Vec<(f64, f64)> = bs
        .iter()
        .zip(&f0s)
        .map(|(&b, &f0)| (b, 2.0 * PI * f0))
        .collect();
    let b_ref = b_ref.unwrap_or_else(|| bs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let fit = fit_power_law(&points, config.string.rho, b_ref)?;
    emit(out.as_ref(), &pretty_json(&fit)?)?;
    if !fit.report.converged {
        return Err(CliError::NonConvergence(
            "power-law fit hit the iteration cap".into(),
        ));
    }
    Ok(())
}

pub struct LockArgs {
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

pub fn cmd_lock(config: &RunConfig, seed: u64, args: LockArgs) -> Result<(), CliError> {
    let mut lock: LockConfig = config.lock.to_lock_config(seed);
    if let Some(kp) = args.kp {
        lock.kp = kp;
    }
    if let Some(ki) = args.ki {
        lock.ki = ki;
    }
    let res = calibrated_resonator(config)?;
    let (trace, summary) = run_lock(&lock, &res, &config.squid)?;
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        trace.to_csv(&mut buf)?;
        write_atomic(path, &String::from_utf8_lossy(&buf))?;
    }
    emit(args.summary.as_ref(), &pretty_json(&summary)?)
}

pub fn cmd_plot(input: PathBuf, out: PathBuf, kind: Option<String>) -> Result<(), CliError> {
    let text = fs::read_to_string(&input)?;
    let table = parse_table(&text).map_err(CliError::Usage)?;
    let kind = match kind {
        Some(name) => PlotKind::parse(&name)
            .ok_or_else(|| CliError::Usage(format!("unknown plot kind {name:?}")))?,
        None => PlotKind::from_headers(&table.headers).ok_or_else(|| {
            CliError::Usage(format!(
                "cannot infer plot kind from header {:?}; pass --kind",
                table.headers.join(",")
            ))
        })?,
    };
    let svg = render(kind, &table).map_err(CliError::Usage)?;
    write_atomic(&out, &svg)
}
