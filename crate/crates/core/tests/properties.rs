use hto_sim::control::{identify_foptd, simc_tune, FoptdModel, PiController, StepResponse};
use hto_sim::estimator::{ekf_predict, ekf_update, EstimatorInputs, EstimatorState, Measurement, NoiseConfig, SimplifiedModel};
use hto_sim::io::config::{parse_config, serialize_config, Config};
use hto_sim::numerics::Matrix;
use hto_sim::plant::{self, PlantInputs, PlantParams};
use hto_sim::scenario::{log_precision, t_oob, OperatingPoint, TimeSeriesRecord};
use proptest::prelude::*;

fn nominal_steady() -> (plant::PlantState, PlantInputs) {
    OperatingPoint::default().steady_state(&PlantParams::default()).unwrap()
}

fn record(t: f64, h: f64) -> TimeSeriesRecord {
    TimeSeriesRecord {
        t,
        hto: vec![h, h / 2.0],
        hto_meas: 0.0,
        hto_hat: 0.0,
        n_h2_hat: 0.0,
        n_o2_hat: 0.0,
        pressure: vec![20.0, 20.0],
        level: 0.5,
        p_sp: 20.0,
        n_out_gas: 3.0,
        m_lye: 10.75,
        current_density: 2000.0,
        dp: 0.1,
        alarm: vec![false, false],
        y: Measurement::from_array([20.0, 0.5, 0.005, 0.995]),
        closure_error: 0.0,
        holdup: 0.0,
        cum_in: 0.0,
        cum_out: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Mole fractions of each compartment keep summing to one.
    #[test]
    fn composition_rates_cancel(
        scale_p in 0.9f64..1.1,
        x_shift in -0.004f64..0.02,
        i in 300.0f64..4000.0,
        dp in 0.0f64..0.6,
        n_out_f in 0.5f64..1.5,
        level in 0.2f64..0.8,
    ) {
        let pp = PlantParams::default();
        let (mut s, mut u) = nominal_steady();
        for k in 0..s.n_compartments() {
            s.pressure[k] *= scale_p;
            s.x_h2[k] = (s.x_h2[k] + x_shift).clamp(0.0, 1.0);
            s.x_o2[k] = 1.0 - s.x_h2[k];
        }
        s.level = level;
        u.current_density = i;
        u.dp = dp;
        u.n_out_gas *= n_out_f;
        let rates = plant::plant_rhs(&s, &u, &pp).unwrap();
        for k in 0..s.n_compartments() {
            prop_assert!((rates.x_h2[k] + rates.x_o2[k]).abs() <= 1e-12 * (rates.x_h2[k].abs() + 1e-12));
            prop_assert!(rates.pressure[k].is_finite());
        }
    }

    /// More current with everything else fixed lowers the steady HTO.
    #[test]
    fn hto_falls_with_current(i in 600.0f64..3500.0) {
        let pp = PlantParams::default();
        let hto_at = |i: f64| {
            let op = OperatingPoint { current_density: i, ..OperatingPoint::default() };
            let (s, _) = op.steady_state(&pp).unwrap();
            s.hto(s.separator()).unwrap()
        };
        prop_assert!(hto_at(i) > hto_at(i * 1.1));
    }

    #[test]
    fn pi_output_stays_within_limits(
        kc in 0.01f64..100.0,
        tau_i in 0.1f64..500.0,
        seq in prop::collection::vec(-50.0f64..50.0, 1..200),
    ) {
        let mut c = PiController::new(kc, tau_i, -3.0, 7.0).unwrap();
        c.setpoint = 1.0;
        for y in seq {
            let before = c.integral;
            let out = c.step(y, 0.1);
            prop_assert!((-3.0..=7.0).contains(&out));
            prop_assert!(c.integral.is_finite());
            // Integration only moves the output toward the admissible range.
            if out == 7.0 { prop_assert!(c.integral <= before + 1e-12 || (1.0 - y) <= 0.0); }
            if out == -3.0 { prop_assert!(c.integral >= before - 1e-12 || (1.0 - y) >= 0.0); }
        }
    }

    /// Smith identification recovers a sampled first-order-plus-delay response.
    #[test]
    fn foptd_identification_recovers_model(k in 0.2f64..5.0, tau in 5.0f64..60.0, theta in 0.5f64..10.0) {
        let dt = 0.05;
        let t: Vec<f64> = (0..((12.0 * tau + theta + 10.0) / dt) as usize).map(|i| i as f64 * dt).collect();
        let y = t
            .iter()
            .map(|t| {
                let s = t - 5.0 - theta;
                if s > 0.0 { k * (1.0 - (-s / tau).exp()) } else { 0.0 }
            })
            .collect();
        let m = identify_foptd(&StepResponse { t, y, step_time: 5.0, step_size: 1.0 }).unwrap();
        prop_assert!((m.k - k).abs() < 1e-3 * k);
        prop_assert!((m.tau - tau).abs() < 0.02 * tau + 2.0 * dt);
        prop_assert!((m.theta - theta).abs() < 0.02 * tau + 2.0 * dt);
    }

    #[test]
    fn simc_gain_sign_follows_process(k in -10.0f64..10.0, tau in 0.1f64..100.0, theta in 0.0f64..20.0, tc in 0.1f64..50.0) {
        prop_assume!(k.abs() > 1e-6);
        let t = simc_tune(&FoptdModel { k, tau, theta }, tc).unwrap();
        prop_assert_eq!(t.kc.signum(), k.signum());
        prop_assert!(t.tau_i > 0.0 && t.tau_i <= tau + 1e-12);
    }

    /// The filter keeps P symmetric positive semidefinite and the
    /// compositions admissible whatever it is fed.
    #[test]
    fn ekf_covariance_stays_psd(
        ys in prop::collection::vec((19.0f64..21.0, 0.45f64..0.55, 0.0f64..0.05, 0.9f64..1.0), 1..40),
    ) {
        let model = SimplifiedModel { params: PlantParams::default(), m_in: 10.75, t_s: 0.1 };
        let noise = NoiseConfig::default();
        let mut est = EstimatorState {
            x: [20.0, 0.5, 0.0054, 0.9946, 0.0168, 3.099],
            p: Matrix::identity(6, 6),
        };
        let u = EstimatorInputs { n_out_gas: 3.1, m_lye: 10.75 };
        for (p, l, xh, xo) in ys {
            est = ekf_predict(&est, &u, &noise, &model).unwrap();
            est = ekf_update(&est, &Measurement::from_array([p, l, xh, xo]), &noise).unwrap();
            let (asym, eig) = est.covariance_health();
            prop_assert!(asym <= 1e-12);
            prop_assert!(eig >= -1e-10);
            prop_assert!((0.0..=1.0).contains(&est.x[2]) && (0.0..=1.0).contains(&est.x[3]));
            prop_assert!((est.x[2] + est.x[3] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn t_oob_is_bounded_by_window(values in prop::collection::vec(0.0f64..0.05, 2..300), a in 0usize..100, len in 0usize..300) {
        let recs: Vec<_> = values.iter().enumerate().map(|(k, h)| record(k as f64 * 0.1, *h)).collect();
        let window = (a as f64 * 0.1, (a + len) as f64 * 0.1);
        let m = t_oob(&recs, 0.02, window);
        prop_assert!(m >= 0.0);
        prop_assert!(m <= (window.1 - window.0) / 60.0 + 1e-12);
    }

    #[test]
    fn log_precision_is_idempotent(x in prop::num::f64::NORMAL) {
        let r = log_precision(x);
        prop_assert_eq!(log_precision(r), r);
        prop_assert!((r - x).abs() <= 5e-9 * x.abs());
    }

    #[test]
    fn config_round_trips(
        seed in any::<u64>(),
        periods in 1u32..100_000,
        p_std in 0.0f64..0.1,
        q0 in 0.1f64..100.0,
        measurement in any::<bool>(),
        explicit in any::<bool>(),
    ) {
        let mut cfg = Config::default();
        cfg.scenario.seed = seed;
        cfg.scenario.duration = periods as f64 * cfg.scenario.sample_period;
        cfg.scenario.meas_noise_std[0] = p_std;
        cfg.noise.q[(0, 0)] = q0;
        if measurement {
            cfg.scenario.feedback_source = hto_sim::control::FeedbackSource::Measurement;
        }
        if explicit {
            cfg.calibration_target = None;
        }
        let back = parse_config(&serialize_config(&cfg)).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
