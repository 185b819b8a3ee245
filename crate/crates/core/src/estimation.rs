//! Damped nonlinear least squares with finite-difference Jacobians, plus the
//! two device-specific fits: (E_J, Omega_0) from flux-tuning curves and the
//! Labusch power law across in-plane fields.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constants::PHI0;
use crate::error::{ModelError, Result};
use crate::mechanics::StringParams;
use crate::squid::{s0, SquidParams};

/// Model function: `(params, x) -> prediction`.
pub type ModelFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Relative finite-difference step for the forward Jacobian.
const FD_REL_STEP: f64 = 1e-7;
/// Convergence threshold on the relative step norm.
const STEP_TOL: f64 = 1e-10;
/// Convergence threshold on the relative cost decrease.
const COST_TOL: f64 = 1e-12;
/// Iteration cap.
const MAX_ITERS: usize = 200;
/// Damping growth/shrink factor and its ceiling before giving up.
const LAMBDA_FACTOR: f64 = 10.0;
const LAMBDA_MAX: f64 = 1e14;

/// A weighted nonlinear least-squares problem.
///
/// Data points are sorted by `(x, y, sigma)` at construction so the
/// accumulation order (and therefore the result, bit for bit) does not
/// depend on the order the caller supplies them in.
#[derive(Clone)]
pub struct FitProblem {
    model: ModelFn,
    data: Vec<(f64, f64, f64)>,
    init: Vec<f64>,
    names: Vec<String>,
    bounds: Vec<(f64, f64)>,
    fixed: Vec<bool>,
}

impl FitProblem {
    /// `data` entries are `(x, y, sigma_y)` with `sigma_y > 0`.
    pub fn new(model: ModelFn, data: Vec<(f64, f64, f64)>, init: Vec<f64>) -> Self {
        let n = init.len();
        let mut data = data;
        data.sort_by(|a, b| {
            (a.0, a.1, a.2)
                .partial_cmp(&(b.0, b.1, b.2))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self {
            model,
            data,
            names: (0..n).map(|i| format!("p{i}")).collect(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            init,
            fixed: vec![false; n],
        }
    }

    pub fn with_names(mut self, names: &[&str]) -> Self {
        assert_eq!(names.len(), self.init.len());
        self.names = names.iter().map(|s| s.to_string()).collect();
        self
    }

    /// Box bounds per parameter; steps are projected back into the box.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), self.init.len());
        self.bounds = bounds;
        self
    }

    /// Mask of parameters to hold fixed at their initial values.
    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Self {
        assert_eq!(fixed.len(), self.init.len());
        self.fixed = fixed;
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn validate(&self) -> Result<()> {
        let n_free = self.fixed.iter().filter(|f| !**f).count();
        if self.data.is_empty() || self.data.len() < n_free {
            return Err(ModelError::InvalidParameter(format!(
                "{} data points cannot constrain {n_free} free parameters",
                self.data.len()
            )));
        }
        if self.data.iter().any(|d| !(d.2 > 0.0)) {
            return Err(ModelError::InvalidParameter(
                "all sigma_y must be > 0".into(),
            ));
        }
        for (i, (&p, &(lo, hi))) in self.init.iter().zip(&self.bounds).enumerate() {
            if !(p >= lo && p <= hi) {
                return Err(ModelError::InvalidParameter(format!(
                    "initial {} = {p} outside bounds [{lo}, {hi}]",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }

    fn residuals(&self, params: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data
                .iter()
                .map(|&(x, y, s)| ((self.model)(params, x) - y) / s),
        )
    }

    fn clamp(&self, params: &mut [f64]) {
        for (p, &(lo, hi)) in params.iter_mut().zip(&self.bounds) {
            *p = p.clamp(lo, hi);
        }
    }
}

/// Fit result. Serializes as
/// `{"params": {...}, "stderr": {...}, "cov": [[...]], "red_chisq": x,
///   "iterations": n, "converged": bool}`;
/// `cov` rows/columns follow the problem's parameter order (fixed parameters
/// contribute zero rows).
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub params: BTreeMap<String, f64>,
    pub stderr: BTreeMap<String, f64>,
    pub cov: Vec<Vec<f64>>,
    pub red_chisq: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best-fit values in problem parameter order.
    #[serde(skip)]
    pub param_values: Vec<f64>,
    /// Standard errors in problem parameter order.
    #[serde(skip)]
    pub stderr_values: Vec<f64>,
    /// Parameter names in problem order.
    #[serde(skip)]
    pub names: Vec<String>,
    /// Cost after the initial point and after every accepted step.
    #[serde(skip)]
    pub cost_trace: Vec<f64>,
}

impl FitReport {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn stderr_of(&self, name: &str) -> Option<f64> {
        self.stderr.get(name).copied()
    }
}

fn forward_jacobian(
    problem: &FitProblem,
    z: &[f64],
    scale: &[f64],
    free: &[usize],
    r0: &DVector<f64>,
) -> DMatrix<f64> {
    let m = problem.data.len();
    let mut jac = DMatrix::zeros(m, free.len());
    let mut z_try = z.to_vec();
    for (col, &j) in free.iter().enumerate() {
        let dz = FD_REL_STEP * z[j].abs().max(1.0);
        z_try[j] = z[j] + dz;
        let p_try: Vec<f64> = z_try.iter().zip(scale).map(|(&zi, &si)| zi * si).collect();
        let r_try = problem.residuals(&p_try);
        for i in 0..m {
            jac[(i, col)] = (r_try[i] - r0[i]) / dz;
        }
        z_try[j] = z[j];
    }
    jac
}

/// Central-difference Jacobian with a wider step, used for the covariance at
/// the optimum where rounding in one-sided differences would dominate.
fn central_jacobian(
    problem: &FitProblem,
    z: &[f64],
    scale: &[f64],
    free: &[usize],
) -> DMatrix<f64> {
    let m = problem.data.len();
    let mut jac = DMatrix::zeros(m, free.len());
    let mut z_try = z.to_vec();
    for (col, &j) in free.iter().enumerate() {
        let dz = 1e-5 * z[j].abs().max(1.0);
        z_try[j] = z[j] + dz;
        let p_hi: Vec<f64> = z_try.iter().zip(scale).map(|(&zi, &si)| zi * si).collect();
        z_try[j] = z[j] - dz;
        let p_lo: Vec<f64> = z_try.iter().zip(scale).map(|(&zi, &si)| zi * si).collect();
        z_try[j] = z[j];
        let r_hi = problem.residuals(&p_hi);
        let r_lo = problem.residuals(&p_lo);
        for i in 0..m {
            jac[(i, col)] = (r_hi[i] - r_lo[i]) / (2.0 * dz);
        }
    }
    jac
}

/// Minimize the weighted sum of squared residuals by damped least squares.
///
/// The damping factor grows on rejected steps and shrinks on accepted ones.
/// Internally parameters are normalized by their initial magnitudes to keep
/// the normal equations well conditioned. Convergence is declared when the
/// relative step norm drops below 1e-10 or the relative cost decrease below
/// 1e-12; the iteration cap (200) leaves `converged = false`.
pub fn least_squares(problem: &FitProblem) -> Result<FitReport> {
    problem.validate()?;
    let n = problem.init.len();
    let free: Vec<usize> = (0..n).filter(|&i| !problem.fixed[i]).collect();

    let scale: Vec<f64> = problem
        .init
        .iter()
        .map(|&p| if p.abs() > 0.0 { p.abs() } else { 1.0 })
        .collect();
    let mut z: Vec<f64> = problem
        .init
        .iter()
        .zip(&scale)
        .map(|(&p, &s)| p / s)
        .collect();
    let params_of = |z: &[f64]| -> Vec<f64> {
        z.iter().zip(&scale).map(|(&zi, &si)| zi * si).collect()
    };

    let mut params = params_of(&z);
    let mut r = problem.residuals(&params);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(ModelError::InvalidParameter(
            "model is not finite at the initial parameters".into(),
        ));
    }
    let mut cost_trace = vec![cost];
    let mut converged = free.is_empty();
    let mut iterations = 0;
    let mut lambda = 1e-3;

    while !converged && iterations < MAX_ITERS {
        iterations += 1;
        let jac = forward_jacobian(problem, &z, &scale, &free, &r);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let max_diag = (0..free.len()).map(|i| a[(i, i)]).fold(0.0, f64::max);
        if !(max_diag > 0.0) {
            return Err(ModelError::NonConvergence(
                "normal equations are singular: no parameter affects the residuals".into(),
            ));
        }

        // inner damping loop: retry with stronger damping until a step is
        // accepted or the damping overflows
        loop {
            let mut damped = a.clone();
            for i in 0..free.len() {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12 * max_diag);
            }
            let step = damped.clone().cholesky().map(|ch| ch.solve(&(-&g)));
            let step = match step {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    lambda *= LAMBDA_FACTOR;
                    if lambda > LAMBDA_MAX {
                        return Err(ModelError::NonConvergence(
                            "normal equations remained singular under damping".into(),
                        ));
                    }
                    continue;
                }
            };

            let z_norm: f64 = free.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt();
            let rel_step = step.norm() / z_norm.max(1.0);

            let mut z_try = z.clone();
            for (col, &j) in free.iter().enumerate() {
                z_try[j] += step[col];
            }
            let mut p_try = params_of(&z_try);
            problem.clamp(&mut p_try);
            for &j in &free {
                z_try[j] = p_try[j] / scale[j];
            }
            let r_try = problem.residuals(&p_try);
            let cost_try = r_try.norm_squared();

            if rel_step < STEP_TOL {
                // converged on the step-norm criterion; still apply the final
                // polish step when it does not increase the cost
                if cost_try.is_finite() && cost_try <= cost {
                    if cost_try < cost {
                        cost_trace.push(cost_try);
                    }
                    z = z_try;
                    params = p_try;
                    r = r_try;
                    cost = cost_try;
                }
                converged = true;
                break;
            }

            if cost_try.is_finite() && cost_try < cost {
                let rel_decrease = (cost - cost_try) / cost.max(f64::MIN_POSITIVE);
                z = z_try;
                params = p_try;
                r = r_try;
                cost = cost_try;
                cost_trace.push(cost);
                lambda = (lambda / LAMBDA_FACTOR).max(1e-12);
                if rel_decrease < COST_TOL {
                    converged = true;
                }
                break;
            }

            lambda *= LAMBDA_FACTOR;
            if lambda > LAMBDA_MAX {
                // no descent possible beyond numerical noise
                converged = rel_step < 1e-6;
                break;
            }
        }

        if lambda > LAMBDA_MAX {
            break;
        }
    }

    // covariance from the Jacobian at the optimum, scaled by the reduced
    // chi-square (residual variance) when there are spare degrees of freedom
    let dof = problem.data.len().saturating_sub(free.len());
    let red_chisq = if dof > 0 { cost / dof as f64 } else { 0.0 };
    let cov_scale = if dof > 0 { red_chisq } else { 1.0 };

    let mut cov = vec![vec![0.0; n]; n];
    if !free.is_empty() {
        let jac = central_jacobian(problem, &z, &scale, &free);
        let a = jac.transpose() * &jac;
        let inv = a.clone().lu().try_inverse();
        if let Some(inv) = inv {
            for (ci, &i) in free.iter().enumerate() {
                for (cj, &j) in free.iter().enumerate() {
                    let sym = 0.5 * (inv[(ci, cj)] + inv[(cj, ci)]);
                    cov[i][j] = sym * scale[i] * scale[j] * cov_scale;
                }
            }
        } else {
            for &i in &free {
                for &j in &free {
                    cov[i][j] = f64::NAN;
                }
            }
        }
    }

    let stderr_values: Vec<f64> = (0..n).map(|i| cov[i][i].max(0.0).sqrt()).collect();
    let params_map: BTreeMap<String, f64> = problem
        .names
        .iter()
        .cloned()
        .zip(params.iter().copied())
        .collect();
    let stderr_map: BTreeMap<String, f64> = problem
        .names
        .iter()
        .cloned()
        .zip(stderr_values.iter().copied())
        .collect();

    Ok(FitReport {
        params: params_map,
        stderr: stderr_map,
        cov,
        red_chisq,
        iterations,
        converged,
        param_values: params,
        stderr_values,
        names: problem.names.to_vec(),
        cost_trace,
    })
}

/// Compare the engine's forward-difference Jacobian against central
/// differences at `params`. Returns the largest component mismatch relative
/// to the per-column magnitude.
pub fn jacobian_check(problem: &FitProblem, params: &[f64]) -> f64 {
    let n = params.len();
    let free: Vec<usize> = (0..n).filter(|&i| !problem.fixed[i]).collect();
    let scale: Vec<f64> = problem
        .init
        .iter()
        .map(|&p| if p.abs() > 0.0 { p.abs() } else { 1.0 })
        .collect();
    let z: Vec<f64> = params.iter().zip(&scale).map(|(&p, &s)| p / s).collect();
    let r0 = problem.residuals(params);
    let fwd = forward_jacobian(problem, &z, &scale, &free, &r0);

    let m = problem.data.len();
    let mut worst: f64 = 0.0;
    let mut z_try = z.clone();
    for (col, &j) in free.iter().enumerate() {
        let dz = 1e-6 * z[j].abs().max(1.0);
        z_try[j] = z[j] + dz;
        let p_hi: Vec<f64> = z_try.iter().zip(&scale).map(|(&zi, &si)| zi * si).collect();
        z_try[j] = z[j] - dz;
        let p_lo: Vec<f64> = z_try.iter().zip(&scale).map(|(&zi, &si)| zi * si).collect();
        z_try[j] = z[j];
        let r_hi = problem.residuals(&p_hi);
        let r_lo = problem.residuals(&p_lo);
        let col_mag = (0..m).fold(0.0_f64, |acc, i| acc.max(fwd[(i, col)].abs()));
        if col_mag == 0.0 {
            continue;
        }
        for i in 0..m {
            let central = (r_hi[i] - r_lo[i]) / (2.0 * dz);
            worst = worst.max((fwd[(i, col)] - central).abs() / col_mag);
        }
    }
    worst
}

/// Bootstrap standard errors: refit `n_resamples` resampled-with-replacement
/// copies of the data and report the per-parameter standard deviation.
/// Resample seeds derive deterministically from `seed`.
pub fn bootstrap_errors(problem: &FitProblem, n_resamples: usize, seed: u64) -> Result<Vec<f64>> {
    if n_resamples < 2 {
        return Err(ModelError::InvalidParameter(
            "need at least 2 bootstrap resamples".into(),
        ));
    }
    let base = least_squares(problem)?;
    let m = problem.data.len();
    let n = problem.init.len();
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n_resamples);
    for r in 0..n_resamples {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let data: Vec<(f64, f64, f64)> =
            (0..m).map(|_| problem.data[rng.random_range(0..m)]).collect();
        let sub = FitProblem {
            model: Arc::clone(&problem.model),
            data,
            init: base.param_values.clone(),
            names: problem.names.clone(),
            bounds: problem.bounds.clone(),
            fixed: problem.fixed.clone(),
        };
        // a degenerate resample (e.g. one unique point) may fail; skip it
        if let Ok(rep) = least_squares(&sub) {
            samples.push(rep.param_values);
        }
    }
    if samples.len() < 2 {
        return Err(ModelError::Degenerate(
            "bootstrap produced fewer than 2 successful refits".into(),
        ));
    }
    let k = samples.len() as f64;
    let mut out = vec![0.0; n];
    for j in 0..n {
        let mean = samples.iter().map(|s| s[j]).sum::<f64>() / k;
        let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        out[j] = var.sqrt();
    }
    Ok(out)
}

/// Spring-shift shape factor so that d(Omega^2) = E_J * shape(phi_b):
/// 4 pi^2 B^2 l^2 lambda^2 (1 - alpha^2)(cos^4 - alpha^2 sin^4) / (m_r Phi0^2 S0^3).
fn shift_shape(phi_b: f64, squid: &SquidParams, m_r: f64, b_ip: f64) -> f64 {
    let s = s0(phi_b, squid.alpha);
    let alpha2 = squid.alpha * squid.alpha;
    let angular = phi_b.cos().powi(4) - alpha2 * phi_b.sin().powi(4);
    let coupling = b_ip * squid.l * squid.lambda;
    4.0 * PI * PI * coupling * coupling * (1.0 - alpha2) * angular / (m_r * PHI0 * PHI0 * s.powi(3))
}

/// Build the (E_J, Omega_0) flux-tuning problem without solving it.
///
/// `points` are `(phi_b [rad], omega_m [rad/s], sigma [rad/s])`; parameters
/// are `e_j_J` (J) and `omega0_hz` (Hz).
pub fn flux_tuning_problem(
    points: &[(f64, f64, f64)],
    squid: &SquidParams,
    string: &StringParams,
    b_ip: f64,
    s_min: f64,
) -> Result<FitProblem> {
    if points.len() < 3 {
        return Err(ModelError::InvalidParameter(format!(
            "need at least 3 tuning points, got {}",
            points.len()
        )));
    }
    if b_ip == 0.0 {
        return Err(ModelError::Unidentifiable(
            "E_J does not affect the model at B_ip = 0".into(),
        ));
    }
    let phis: Vec<f64> = points.iter().map(|p| p.0).collect();
    let span = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - phis.iter().cloned().fold(f64::INFINITY, f64::min);
    if span <= 0.0 {
        return Err(ModelError::Unidentifiable(
            "tuning points must span a range of phi_b".into(),
        ));
    }
    for &(phi, _, _) in points {
        let s = s0(phi, squid.alpha);
        if s < s_min {
            return Err(ModelError::DomainGuard(format!(
                "tuning point at phi_b = {phi} has S0 = {s} below guard {s_min}"
            )));
        }
    }

    let squid = *squid;
    let m_r = string.m_r;
    let model: ModelFn = Arc::new(move |p: &[f64], phi: f64| {
        let e_j = p[0];
        let omega0 = 2.0 * PI * p[1];
        let omega_sq = omega0 * omega0 + e_j * shift_shape(phi, &squid, m_r, b_ip);
        omega_sq.max(0.0).sqrt() / (2.0 * PI)
    });

    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(phi, w, s)| (phi, w / (2.0 * PI), s / (2.0 * PI)))
        .collect();

    // initial guesses: the smallest frequency bounds Omega_0 from above and
    // the peak-to-edge spread fixes the E_J scale
    let y_min = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let y_max = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    let spread_sq = (2.0 * PI * y_max).powi(2) - (2.0 * PI * y_min).powi(2);
    let shape_peak = shift_shape(0.0, &squid, m_r, b_ip);
    let e_j_init = if spread_sq > 0.0 && shape_peak > 0.0 {
        spread_sq / shape_peak
    } else {
        1e-22
    };

    Ok(FitProblem::new(model, data, vec![e_j_init, y_min])
        .with_names(&["e_j_J", "omega0_hz"])
        .with_bounds(vec![(0.0, f64::INFINITY), (f64::MIN_POSITIVE, f64::INFINITY)]))
}

/// Fit the flux-tuning curve with E_J and Omega_0 as the only free
/// parameters; asymmetry, mass, geometry and the in-plane field stay fixed.
pub fn fit_flux_tuning(
    points: &[(f64, f64, f64)],
    squid: &SquidParams,
    string: &StringParams,
    b_ip: f64,
    s_min: f64,
) -> Result<FitReport> {
    least_squares(&flux_tuning_problem(points, squid, string, b_ip, s_min)?)
}

/// Power-law fit result with the pinning stiffness evaluated at a reference
/// field.
#[derive(Debug, Clone, Serialize)]
pub struct PowerLawFit {
    #[serde(flatten)]
    pub report: FitReport,
    /// alpha_L(b_ref) = a * b_ref^k (N/m^4).
    #[serde(rename = "alpha_l_ref_N_per_m4")]
    pub alpha_l_ref: f64,
    #[serde(rename = "b_ref_T")]
    pub b_ref: f64,
}

/// Build the power-law stiffening problem without solving it.
///
/// `points` are `(b_ip [T], omega0 [rad/s])`; parameters are `omega00_hz`,
/// `a_N_per_m4_Tk` and `k`.
pub fn power_law_problem(points: &[(f64, f64)], rho: f64) -> Result<FitProblem> {
    if !(rho > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "density must be > 0, got {rho}"
        )));
    }
    if points.iter().any(|&(b, _)| !(b > 0.0)) {
        return Err(ModelError::InvalidParameter(
            "all fields must be > 0 for the power-law fit".into(),
        ));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(ModelError::InvalidParameter(format!(
            "need at least 3 distinct fields, got {}",
            distinct.len()
        )));
    }

    let model: ModelFn = Arc::new(move |p: &[f64], b: f64| {
        let omega00 = 2.0 * PI * p[0];
        let omega_sq = omega00 * omega00 + p[1] * b.powf(p[2]) / rho;
        omega_sq.max(0.0).sqrt() / (2.0 * PI)
    });

    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(b, w)| (b, w / (2.0 * PI), 1.0))
        .collect();

    let y_min = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let b_max = distinct.last().copied().unwrap();
    let y_at_bmax = data
        .iter()
        .filter(|d| d.0 == b_max)
        .map(|d| d.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let f00_init = y_min * 0.999;
    let k_init = 2.0;
    let a_num = (2.0 * PI * y_at_bmax).powi(2) - (2.0 * PI * f00_init).powi(2);
    let a_init = if a_num > 0.0 {
        rho * a_num / b_max.powf(k_init)
    } else {
        rho * (2.0 * PI * f00_init).powi(2) * 1e-9 / b_max.powf(k_init)
    };

    Ok(FitProblem::new(model, data, vec![f00_init, a_init, k_init])
        .with_names(&["omega00_hz", "a_N_per_m4_Tk", "k"])
        .with_bounds(vec![
            (f64::MIN_POSITIVE, f64::INFINITY),
            (0.0, f64::INFINITY),
            (0.25, 4.0),
        ]))
}

/// Fit Omega_0(B)^2 = omega00^2 + a B^k / rho to `(b_ip [T], omega0 [rad/s])`
/// points and report the derived pinning stiffness at `b_ref`.
pub fn fit_power_law(points: &[(f64, f64)], rho: f64, b_ref: f64) -> Result<PowerLawFit> {
    let report = least_squares(&power_law_problem(points, rho)?)?;
    let a = report.param("a_N_per_m4_Tk").unwrap();
    let k = report.param("k").unwrap();
    Ok(PowerLawFit {
        alpha_l_ref: a * b_ref.powf(k),
        b_ref,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::{mechanical_frequency, DEFAULT_S_MIN};
    use crate::squid::BiasPoint;

    fn linear_problem(noise: bool) -> FitProblem {
        // y = a x + b with per-point weights
        let a_true = 1.7;
        let b_true = -0.4;
        let data: Vec<(f64, f64, f64)> = (0..20)
            .map(|i| {
                let x = i as f64 * 0.35;
                let sigma = 0.1 + 0.02 * i as f64;
                let wiggle = if noise { 0.05 * ((i as f64) * 2.3).sin() } else { 0.0 };
                (x, a_true * x + b_true + wiggle, sigma)
            })
            .collect();
        let model: ModelFn = Arc::new(|p: &[f64], x: f64| p[0] * x + p[1]);
        FitProblem::new(model, data, vec![0.5, 0.5]).with_names(&["a", "b"])
    }

    /// Closed-form weighted linear regression and its covariance (X^T W X)^-1.
    fn weighted_linreg(data: &[(f64, f64, f64)]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (mut sww, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y, s) in data {
            let w = 1.0 / (s * s);
            sww += w;
            swx += w * x;
            swxx += w * x * x;
            swy += w * y;
            swxy += w * x * y;
        }
        let det = swxx * sww - swx * swx;
        let a = (swxy * sww - swx * swy) / det;
        let b = (swxx * swy - swx * swxy) / det;
        // inverse of [[swxx, swx], [swx, sww]]
        let cov = [
            [sww / det, -swx / det],
            [-swx / det, swxx / det],
        ];
        ([a, b], cov)
    }

    #[test]
    fn linear_fit_matches_closed_form() {
        let problem = linear_problem(true);
        let report = least_squares(&problem).unwrap();
        let ([a, b], _) = weighted_linreg(&problem.data);
        assert!(report.converged);
        assert!((report.param("a").unwrap() - a).abs() / a.abs() < 1e-10);
        assert!((report.param("b").unwrap() - b).abs() / b.abs() < 1e-10);
    }

    #[test]
    fn linear_covariance_matches_closed_form() {
        let problem = linear_problem(true);
        let report = least_squares(&problem).unwrap();
        let ([_, _], cov_cf) = weighted_linreg(&problem.data);
        // both sides carry the same reduced-chi-square scaling
        for (i, cf_row) in cov_cf.iter().enumerate() {
            for (j, cf) in cf_row.iter().enumerate() {
                let expected = cf * report.red_chisq;
                let got = report.cov[i][j];
                assert!(
                    (got - expected).abs() / expected.abs().max(1e-300) < 1e-9,
                    "cov[{i}][{j}] = {got}, expected {expected}"
                );
            }
        }
        // stderr = sqrt(diag(cov))
        for (i, name) in ["a", "b"].iter().enumerate() {
            let e = report.stderr_of(name).unwrap();
            assert!((e - report.cov[i][i].sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn rosenbrock_valley_converges() {
        // residuals (10 (y - x^2), 1 - x) encoded over two dummy abscissae
        let model: ModelFn = Arc::new(|p: &[f64], x: f64| {
            if x < 0.5 {
                10.0 * (p[1] - p[0] * p[0])
            } else {
                1.0 - p[0]
            }
        });
        let data = vec![(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)];
        let problem = FitProblem::new(model, data, vec![-1.2, 1.0]);
        let report = least_squares(&problem).unwrap();
        let cost = report.cost_trace.last().copied().unwrap();
        assert!(report.converged, "{report:?}");
        assert!(cost < 1e-12, "cost = {cost}");
        assert!((report.param_values[0] - 1.0).abs() < 1e-6);
        assert!((report.param_values[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cost_trace_non_increasing() {
        let problem = linear_problem(true);
        let report = least_squares(&problem).unwrap();
        for w in report.cost_trace.windows(2) {
            assert!(w[1] <= w[0], "accepted cost increased: {:?}", report.cost_trace);
        }
    }

    #[test]
    fn fixed_parameters_stay_bit_identical() {
        let model: ModelFn = Arc::new(|p: &[f64], x: f64| p[0] * x + p[1] + p[2] * x * x);
        let data: Vec<(f64, f64, f64)> = (0..12)
            .map(|i| {
                let x = i as f64 * 0.5;
                (x, 2.0 * x + 0.3 + 0.1 * x * x, 1.0)
            })
            .collect();
        let init = vec![1.0, 0.12345678901234567, 0.1];
        let problem = FitProblem::new(model, data, init.clone()).with_fixed(vec![false, true, false]);
        let report = least_squares(&problem).unwrap();
        assert_eq!(report.param_values[1].to_bits(), init[1].to_bits());
        assert_eq!(report.stderr_values[1], 0.0);
    }

    #[test]
    fn reordering_data_is_bit_exact() {
        let problem = linear_problem(true);
        let mut reversed_data = problem.data.clone();
        reversed_data.reverse();
        let model: ModelFn = Arc::new(|p: &[f64], x: f64| p[0] * x + p[1]);
        let shuffled = FitProblem::new(model, reversed_data, vec![0.5, 0.5]).with_names(&["a", "b"]);
        let r1 = least_squares(&problem).unwrap();
        let r2 = least_squares(&shuffled).unwrap();
        assert_eq!(r1.param_values[0].to_bits(), r2.param_values[0].to_bits());
        assert_eq!(r1.param_values[1].to_bits(), r2.param_values[1].to_bits());
    }

    #[test]
    fn jacobian_forward_vs_central() {
        let problem = linear_problem(true);
        let report = least_squares(&problem).unwrap();
        assert!(jacobian_check(&problem, &report.param_values) < 1e-4);
    }

    #[test]
    fn validation_errors() {
        let model: ModelFn = Arc::new(|p: &[f64], _x: f64| p[0]);
        let empty = FitProblem::new(Arc::clone(&model), vec![], vec![1.0]);
        assert!(least_squares(&empty).is_err());
        let bad_sigma = FitProblem::new(Arc::clone(&model), vec![(0.0, 1.0, 0.0)], vec![1.0]);
        assert!(least_squares(&bad_sigma).is_err());
        let out_of_bounds = FitProblem::new(model, vec![(0.0, 1.0, 1.0)], vec![1.0])
            .with_bounds(vec![(2.0, 3.0)]);
        assert!(least_squares(&out_of_bounds).is_err());
    }

    #[test]
    fn report_json_schema() {
        let report = least_squares(&linear_problem(false)).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in ["params", "stderr", "cov", "red_chisq", "iterations", "converged"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert!(json["params"].get("a").is_some());
    }

    fn paper_string() -> StringParams {
        StringParams::new(
            0.6e-15,
            2.0 * PI * 5.8e6,
            2.0 * PI * 20.0,
            20e-6,
            0.2e-6,
            0.11e-6,
            2700.0,
        )
        .unwrap()
    }

    fn paper_setup() -> (SquidParams, StringParams, f64) {
        let squid = SquidParams::from_lj_min(0.36e-9, 0.01, 20e-6, 0.9).unwrap();
        let string = paper_string();
        let e_j = squid.e_j();
        (squid, string, e_j)
    }

    #[test]
    fn flux_tuning_noiseless_round_trip() {
        let (squid, string, e_j) = paper_setup();
        let b_ip = 35e-3;
        let points: Vec<(f64, f64, f64)> = (0..25)
            .map(|i| {
                let phi = -0.45 * PI + 0.9 * PI * i as f64 / 24.0;
                let bias = BiasPoint::new(phi, b_ip, 0.0).unwrap();
                let w = mechanical_frequency(&string, &squid, &bias, e_j, DEFAULT_S_MIN).unwrap();
                (phi, w, 2.0 * PI)
            })
            .collect();
        let report = fit_flux_tuning(&points, &squid, &string, b_ip, DEFAULT_S_MIN).unwrap();
        assert!(report.converged);
        let e_j_fit = report.param("e_j_J").unwrap();
        let f0_fit = report.param("omega0_hz").unwrap();
        assert!((e_j_fit - e_j).abs() / e_j < 1e-8, "e_j = {e_j_fit}");
        let f0_true = string.omega0 / (2.0 * PI);
        assert!((f0_fit - f0_true).abs() / f0_true < 1e-8, "f0 = {f0_fit}");
    }

    #[test]
    fn flux_tuning_rejects_zero_field() {
        let (squid, string, e_j) = paper_setup();
        let points: Vec<(f64, f64, f64)> = (0..5)
            .map(|i| (i as f64 * 0.1, string.omega0, 2.0 * PI))
            .collect();
        let _ = e_j;
        let err = fit_flux_tuning(&points, &squid, &string, 0.0, DEFAULT_S_MIN);
        assert!(matches!(err, Err(ModelError::Unidentifiable(_))));
    }

    #[test]
    fn power_law_exact_square_exponent() {
        let string = paper_string();
        let omega00 = string.omega0;
        let a_true = 7.88e14 / 35e-3_f64.powi(2);
        let rho = 2700.0;
        let points: Vec<(f64, f64)> = [6.2e-3, 10e-3, 15e-3, 22e-3, 35e-3]
            .iter()
            .map(|&b| {
                let w = (omega00 * omega00 + a_true * b * b / rho).sqrt();
                (b, w)
            })
            .collect();
        let fit = fit_power_law(&points, rho, 35e-3).unwrap();
        let k = fit.report.param("k").unwrap();
        assert!((k - 2.0).abs() < 1e-8, "k = {k}");
    }

    #[test]
    fn power_law_paper_values_round_trip() {
        let string = paper_string();
        let omega00 = string.omega0;
        let k_true = 1.81;
        let a_true = 7.88e14 / 35e-3_f64.powf(k_true);
        let rho = 2700.0;
        let points: Vec<(f64, f64)> = [6.2e-3_f64, 9e-3, 13e-3, 18e-3, 25e-3, 35e-3]
            .iter()
            .map(|&b| (b, (omega00 * omega00 + a_true * b.powf(k_true) / rho).sqrt()))
            .collect();
        let fit = fit_power_law(&points, rho, 35e-3).unwrap();
        let k = fit.report.param("k").unwrap();
        let f00 = fit.report.param("omega00_hz").unwrap();
        assert!((k - k_true).abs() / k_true < 1e-6, "k = {k}");
        assert!((fit.alpha_l_ref - 7.88e14).abs() / 7.88e14 < 1e-6, "alpha_l = {}", fit.alpha_l_ref);
        assert!((f00 - omega00 / (2.0 * PI)).abs() / (omega00 / (2.0 * PI)) < 1e-9, "f00 = {f00}");
    }

    #[test]
    fn power_law_rejects_bad_inputs() {
        assert!(fit_power_law(&[(0.0, 1.0), (1e-3, 1.0), (2e-3, 1.0)], 2700.0, 35e-3).is_err());
        assert!(fit_power_law(&[(1e-3, 1.0), (1e-3, 1.0), (1e-3, 1.0)], 2700.0, 35e-3).is_err());
        assert!(fit_power_law(&[(1e-3, 1.0), (2e-3, 1.0), (3e-3, 1.0)], 0.0, 35e-3).is_err());
    }

    #[test]
    fn bootstrap_errors_close_to_covariance_errors() {
        let problem = linear_problem(true);
        let report = least_squares(&problem).unwrap();
        let boots = bootstrap_errors(&problem, 200, 7).unwrap();
        for (boot_err, cov_err) in boots.iter().zip(&report.stderr_values) {
            assert!(
                *boot_err < 10.0 * cov_err && *boot_err > cov_err / 10.0,
                "bootstrap err {boot_err} vs covariance err {cov_err}"
            );
        }
    }
}
