//! Property tests for the model invariants, plus the statistical
//! unbiasedness check of the Lorentzian estimator.

use proptest::prelude::*;
use std::f64::consts::PI;

use squidmech_core::circuit::{calibrate_lc, cavity_frequency, s21_sq};
use squidmech_core::fluxlock::{drift_process, LockConfig};
use squidmech_core::mechanics::{mechanical_frequency, StringParams, DEFAULT_S_MIN};
use squidmech_core::spectra::{fit_lorentzian, lorentzian_psd, q_factor, synth_thermal_spectrum};
use squidmech_core::squid::{josephson_energy, josephson_inductance, s0, BiasPoint, SquidParams};

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

proptest! {
    #[test]
    fn s0_bounded_even_and_periodic(phi in -10.0f64..10.0, alpha in 0.0f64..0.999) {
        let v = s0(phi, alpha);
        prop_assert!(v >= alpha - 1e-12);
        prop_assert!(v <= 1.0 + 1e-12);
        prop_assert!((v - s0(-phi, alpha)).abs() < 1e-12);
        prop_assert!((v - s0(phi + PI, alpha)).abs() < 1e-9);
    }

    #[test]
    fn josephson_energy_symmetric_under_swap(i1 in 1e-9f64..1e-5, i2 in 1e-9f64..1e-5) {
        let a = josephson_energy(i1, i2).unwrap();
        let b = josephson_energy(i2, i1).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn inductance_times_s0_constant(
        phi in -PI..PI,
        alpha in 0.001f64..0.5,
        lj_min in 1e-10f64..1e-8,
    ) {
        let squid = SquidParams::from_lj_min(lj_min, alpha, 20e-6, 0.9).unwrap();
        let product = josephson_inductance(&squid, phi).unwrap() * s0(phi, alpha);
        let reference = josephson_inductance(&squid, 0.0).unwrap();
        prop_assert!((product - reference).abs() / reference < 1e-12);
    }

    #[test]
    fn transmission_is_passive(
        detune_kappa in -100.0f64..100.0,
        kappa_int_frac in 0.0f64..0.95,
    ) {
        let res = calibrate_lc(2.0 * PI * 7.45e9, 2.0 * PI * 6.6e9, 0.36e-9, 0.45 * PI, 0.01)
            .unwrap();
        let kappa = res.kappa();
        let res = res
            .with_kappa(kappa * kappa_int_frac, kappa * (1.0 - kappa_int_frac))
            .unwrap();
        let omega_c = cavity_frequency(&res, 0.36e-9);
        let v = s21_sq(omega_c + detune_kappa * kappa, &res, omega_c);
        prop_assert!(v <= 1.0 + 1e-12);
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn mechanical_frequency_is_intrinsic_without_field(phi in -1.4f64..1.4) {
        let string = paper_string();
        let squid = SquidParams::from_lj_min(0.36e-9, 0.01, 20e-6, 0.9).unwrap();
        let bias = BiasPoint::new(phi, 0.0, 0.0).unwrap();
        let w = mechanical_frequency(&string, &squid, &bias, squid.e_j(), DEFAULT_S_MIN).unwrap();
        prop_assert_eq!(w.to_bits(), string.omega0.to_bits());
    }

    #[test]
    fn q_factor_scale_invariant(center in 1e3f64..1e9, fwhm in 1e-2f64..1e5, scale in 0.1f64..100.0) {
        let q = q_factor(center, fwhm);
        let qs = q_factor(center * scale, fwhm * scale);
        prop_assert!((q - qs).abs() / q < 1e-12);
    }

    #[test]
    fn lorentzian_peak_height_and_positivity(
        fwhm in 1e-2f64..1e4,
        area in 1e-18f64..1e-3,
        floor in 0.0f64..1e-6,
    ) {
        let center = 5.8e6;
        let grid = [center - 2.0 * fwhm, center, center + 2.0 * fwhm];
        let trace = lorentzian_psd(&grid, center, fwhm, area, floor).unwrap();
        let expected_peak = floor + 2.0 * area / (PI * fwhm);
        prop_assert!((trace.psd[1] - expected_peak).abs() / expected_peak < 1e-12);
        prop_assert!(trace.psd.iter().all(|&v| v >= floor));
    }

    #[test]
    fn drift_deterministic_and_zero_sigma_quiet(seed in 0u64..1000, sigma in 0.0f64..0.01) {
        let config = LockConfig { sigma_phi0: sigma, seed, ..LockConfig::default() };
        let a = drift_process(&config, 64).unwrap();
        let b = drift_process(&config, 64).unwrap();
        prop_assert_eq!(&a, &b);
        if sigma == 0.0 {
            prop_assert!(a.iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn lorentzian_center_estimator_is_unbiased() {
    // mean fitted center over 200 seeds stays within 3 fwhm / sqrt(200 n_avg)
    let string = paper_string();
    let n_avg = 100;
    let fwhm = 20.0;
    let grid: Vec<f64> = (0..1501)
        .map(|i| 5.8e6 - 750.0 + 1500.0 * i as f64 / 1500.0)
        .collect();
    let n_seeds = 200u64;
    let mut sum = 0.0;
    for seed in 0..n_seeds {
        let trace = synth_thermal_spectrum(&string, 85e-3, 1e9, &grid, 1e-15, n_avg, seed).unwrap();
        let fit = fit_lorentzian(&trace, None).unwrap();
        sum += fit.center_hz - 5.8e6;
    }
    let bias = sum / n_seeds as f64;
    let bound = 3.0 * fwhm / ((n_seeds * n_avg as u64) as f64).sqrt();
    assert!(
        bias.abs() < bound,
        "center bias {bias} Hz exceeds the unbiasedness bound {bound} Hz"
    );
}
