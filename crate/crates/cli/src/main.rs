//! squidmech: dataset generation, fitting, and figure-style exports for a
//! flux-mediated nano-electromechanical system model.

mod commands;
mod config;
mod csvio;
mod svg;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use commands::{
    cmd_calibrate, cmd_fit_lorentz, cmd_fit_powerlaw, cmd_fit_tune, cmd_lock, cmd_plot, cmd_spectrum,
    cmd_sweep, cmd_tune, CalibrateArgs, CliError, LockArgs,
};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "squidmech",
    version,
    about = "Flux-tunable electromechanics: models, synthetic data, and fits"
)]
struct Cli {
    /// JSON configuration file (defaults apply when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides SQUIDMECH_SEED and the config value
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the lumped resonator (L, C) from the frequency extremes
    Calibrate {
        /// Zero-flux resonance frequency (Hz)
        #[arg(long)]
        omega_max: Option<f64>,
        /// Edge-flux resonance frequency (Hz)
        #[arg(long)]
        omega_min: Option<f64>,
        /// Minimum Josephson inductance (H)
        #[arg(long)]
        lj_min: Option<f64>,
        /// Calibration edge flux (units of pi)
        #[arg(long)]
        phi_edge: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// |S21|^2 map over (flux, frequency) as CSV
    Sweep {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mechanical frequency vs flux for each in-plane field as CSV
    Tune {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated in-plane fields (T), overriding the config list
        #[arg(long, value_delimiter = ',')]
        b_ip: Option<Vec<f64>>,
    },
    /// Synthetic thermal sideband spectrum as CSV plus JSON sidecar
    Spectrum {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a Lorentzian line to a spectrum CSV
    FitLorentz {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit (E_J, Omega_0) to a tuning CSV, one fit per in-plane field
    FitTune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the fitted omega0(B) values as CSV for chaining
        #[arg(long)]
        omega0_csv: Option<PathBuf>,
    },
    /// Fit the pinning power law to (b_ip_T, omega0_hz) points
    FitPowerlaw {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reference field for the derived pinning stiffness (T)
        #[arg(long)]
        b_ref: Option<f64>,
    },
    /// Simulate the flux stabilization loop
    Lock {
        #[arg(long, allow_negative_numbers = true)]
        kp: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        ki: Option<f64>,
        /// Per-step trace CSV
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON (stdout when omitted)
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Render a toolkit CSV as a standalone SVG
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// sweep | tune | spectrum | lock (inferred from the header if omitted)
        #[arg(long)]
        kind: Option<String>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))
        }
        None => Ok(RunConfig::default()),
    }
}

fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("SQUIDMECH_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("SQUIDMECH_SEED {v:?}: {e}"))),
        Err(_) => Ok(config_seed),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_ref())?;
    let seed = resolve_seed(cli.seed, config.seed)?;
    match cli.command {
        Command::Calibrate { omega_max, omega_min, lj_min, phi_edge, out } => cmd_calibrate(
            config,
            CalibrateArgs {
                omega_max_hz: omega_max,
                omega_min_hz: omega_min,
                lj_min_h: lj_min,
                phi_edge_over_pi: phi_edge,
                out,
            },
        ),
        Command::Sweep { out } => cmd_sweep(&config, out),
        Command::Tune { out, b_ip } => cmd_tune(&config, seed, out, b_ip),
        Command::Spectrum { out } => cmd_spectrum(&config, seed, out),
        Command::FitLorentz { input, out } => cmd_fit_lorentz(input, out),
        Command::FitTune { input, out, omega0_csv } => cmd_fit_tune(&config, input, out, omega0_csv),
        Command::FitPowerlaw { input, out, b_ref } => cmd_fit_powerlaw(&config, input, out, b_ref),
        Command::Lock { kp, ki, out, summary } => {
            cmd_lock(&config, seed, LockArgs { kp, ki, out, summary })
        }
        Command::Plot { input, out, kind } => cmd_plot(input, out, kind),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
