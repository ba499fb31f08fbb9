use hto_sim::control::DEFAULT_HTO_SP;
use hto_sim::io::cli::prepare;
use hto_sim::io::{render_svg, Config};
use hto_sim::plant::PlantParams;
use hto_sim::scenario::{self, run_table1, OperatingPoint, ScenarioConfig};

fn separator_hto(op: OperatingPoint) -> f64 {
    let (s, _) = op.steady_state(&PlantParams::default()).unwrap();
    s.hto(s.separator()).unwrap()
}

#[test]
fn calibrated_disturbances_exceed_the_alarm_limit() {
    let nominal = OperatingPoint::default();
    let c = scenario::calibrate_disturbances(&PlantParams::default(), &nominal, 0.025).unwrap();
    // Independent steady-state evaluations at the returned magnitudes.
    let low_i = separator_hto(OperatingPoint {
        current_density: c.current_density_low,
        ..nominal
    });
    let high_dp = separator_hto(OperatingPoint { dp: c.dp_high, ..nominal });
    assert!(low_i >= 0.02 && (0.025..=0.03).contains(&low_i), "{low_i}");
    assert!(high_dp >= 0.02 && (0.025..=0.03).contains(&high_dp), "{high_dp}");
    assert!(separator_hto(nominal) < DEFAULT_HTO_SP);

    let events = scenario::reference_disturbance_sequence(&c);
    assert_eq!(events.len(), 2);
    assert_eq!((events[0].t_start, events[0].t_end), (1800.0, 3600.0));
    assert_eq!((events[1].t_start, events[1].t_end), (5400.0, 7200.0));
}

#[test]
fn unreachable_target_is_a_calibration_error() {
    let err = scenario::calibrate_disturbances(&PlantParams::default(), &OperatingPoint::default(), 0.001).unwrap_err();
    assert!(matches!(err, hto_sim::Error::Calibration(_)));
}

#[test]
fn zero_event_run_stays_at_nominal() {
    let mut cfg = Config::default();
    cfg.calibration_target = None;
    cfg.scenario.duration = 300.0;
    cfg.scenario.noise_enabled = Some(false);
    let prep = prepare(&cfg).unwrap();
    let ctl = prep.controllers.for_source(prep.scenario.feedback_source);
    let run = scenario::run(&prep.scenario, &cfg.plant, &ctl, &cfg.noise).unwrap();
    let first = &run.records[0];
    for r in &run.records {
        for (a, b) in r.hto.iter().zip(&first.hto) {
            assert!((a - b).abs() <= 1e-6 * b, "t = {}", r.t);
        }
        assert!((r.hto_hat - first.hto_hat).abs() <= 1e-6 * first.hto_hat);
        assert_eq!(r.current_density, cfg.scenario.nominal.current_density);
    }
    assert!(run.t_oob_per_event.is_empty());
    roxmltree::Document::parse(&render_svg(&run.records, 0.02).unwrap()).unwrap();
}

#[test]
fn reference_sequence_properties() {
    let cfg = Config::default();
    let prep = prepare(&cfg).unwrap();
    let base: ScenarioConfig = prep.scenario.clone();
    let (table, runs) = run_table1(&base, &cfg.plant, |s| prep.controllers.for_source(s), &cfg.noise).unwrap();
    let [open, meas, est] = &runs;

    // Inputs are nominal outside the event windows.
    for r in &open.records {
        let inside = base.events.iter().any(|e| e.active(r.t));
        if !inside {
            assert_eq!(r.current_density, base.nominal.current_density);
            assert_eq!(r.dp, base.nominal.dp);
        }
    }

    // Estimate feedback brings the pipe back under the limit no later than
    // measurement feedback.
    for e in &base.events {
        let recovery = |run: &scenario::RunResult| {
            let inside: Vec<_> = run.records.iter().filter(|r| r.t >= e.t_start && r.t < e.t_end).collect();
            inside
                .iter()
                .rposition(|r| r.pipe_hto() > base.alarm_limit)
                .map(|i| inside[i].t)
                .unwrap_or(e.t_start)
        };
        assert!(recovery(est) <= recovery(meas), "event at {}", e.t_start);
    }

    // Invariants at every record.
    for run in &runs {
        for r in &run.records {
            assert!(r.closure_error < 1e-9);
            assert!(r.pressure.iter().all(|p| *p > 0.0));
            assert!(r.level > 0.0);
        }
    }

    // The report is reproducible.
    let (again, _) = run_table1(&base, &cfg.plant, |s| prep.controllers.for_source(s), &cfg.noise).unwrap();
    assert_eq!(again, table);
}
