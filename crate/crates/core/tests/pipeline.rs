//! End-to-end runs of the sampling and estimation chain.

use antijam::channel::LinkVariances;
use antijam::experiments::{monte_carlo_validate, MonteCarloConfig};
use antijam::measurement::{MeasurementSet, UavClocks};
use antijam::scenario::{canonical_scenario, LinkCondition};
use antijam::selfloc::{blind_initial_guess, crlb, ml_estimate, MlOptions, UavStateVector};
use antijam::sync::sync_errors;
use antijam::uepos::{ils_estimate, sample_v2u_tdoa};
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_noise_pipeline_is_exact() {
    let s = canonical_scenario();
    let cfg = MonteCarloConfig {
        trials: 100,
        noise_scale: 0.0,
        max_drift_ppm: 0.0,
        ..MonteCarloConfig::default()
    };
    let r = monte_carlo_validate(&s, &cfg).unwrap();
    assert_eq!(r.failed_trials, 0);
    assert!(r.uav_max_abs_error < 1e-4, "{}", r.uav_max_abs_error);
    assert!(r.ue_max_abs_error < 1e-4, "{}", r.ue_max_abs_error);
}

#[test]
fn clock_drift_alone_stays_at_millimeter_level() {
    // a 10 ppm initiator drift scales an 800 m range by 8 mm
    let s = canonical_scenario();
    let cfg = MonteCarloConfig {
        trials: 100,
        noise_scale: 0.0,
        ..MonteCarloConfig::default()
    };
    let r = monte_carlo_validate(&s, &cfg).unwrap();
    assert!(r.uav_max_abs_error > 1e-6);
    assert!(r.uav_max_abs_error < 0.05, "{}", r.uav_max_abs_error);
}

#[test]
fn equal_seeds_equal_reports() {
    let s = canonical_scenario();
    let cfg = MonteCarloConfig {
        trials: 150,
        seed: 77,
        ..MonteCarloConfig::default()
    };
    let a = monte_carlo_validate(&s, &cfg).unwrap();
    let b = monte_carlo_validate(&s, &cfg).unwrap();
    assert_eq!(a, b);
    let c = monte_carlo_validate(&s, &MonteCarloConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a.ue_rmse_empirical, c.ue_rmse_empirical);
}

#[test]
fn ml_estimator_is_unbiased_and_efficient() {
    let s = canonical_scenario();
    let cfg = MonteCarloConfig {
        trials: 2000,
        seed: 3,
        ..MonteCarloConfig::default()
    };
    let r = monte_carlo_validate(&s, &cfg).unwrap();
    for (k, (m, se)) in r.uav_bias.iter().zip(&r.uav_bias_std_error).enumerate() {
        assert!(
            m.abs() < 3.0 * se,
            "coordinate {k}: bias {m} with standard error {se}"
        );
    }
    let ratio = r.uav_trace_empirical / r.uav_trace_theoretical;
    assert!((ratio - 1.0).abs() < 0.1, "trace ratio {ratio}");
}

#[test]
fn nlos_and_off_center_ue_agree_with_closed_form() {
    let s = canonical_scenario().with_j2v(LinkCondition::Nlos);
    let cfg = MonteCarloConfig {
        trials: 2000,
        seed: 5,
        ue_xy: Some(Vector2::new(1150.0, 200.0)),
        ..MonteCarloConfig::default()
    };
    let r = monte_carlo_validate(&s, &cfg).unwrap();
    let ratio = r.ue_rmse_empirical / r.ue_rmse_theoretical;
    assert!((ratio - 1.0).abs() < 0.1, "UE RMSE ratio {ratio}");
}

#[test]
fn blind_start_full_chain() {
    let s = canonical_scenario();
    let lv = LinkVariances::from_scenario(&s).unwrap();
    let bound = crlb(&s, true, &lv).unwrap().crlb;
    let truth = UavStateVector::truth(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let clocks = UavClocks::random(6, 10.0, &mut rng);
    let meas = MeasurementSet::sample(&s, &lv, &clocks, 1.0, &mut rng);
    let init = blind_initial_guess(&meas, &s, 3000.0, 200.0).unwrap();
    let est = ml_estimate(&meas, &s, &init, &MlOptions::default()).unwrap();
    assert!(est.converged);
    for k in 0..12 {
        assert!((est.estimate.0[k] - truth.0[k]).abs() < 5.0 * bound[(k, k)].sqrt());
    }
    let sync = sync_errors(&est.estimate, &s, &lv, 1.0, &mut rng);
    let u = Vector2::new(800.0, -120.0);
    let d = sample_v2u_tdoa(&s, &lv, u, &sync, 1.0, &mut rng).unwrap();
    let ue = ils_estimate(&d, &est.estimate, &s, s.target.center_xy()).unwrap();
    assert!(ue.converged);
    assert!((ue.estimate - u).norm() < 100.0);
}
