//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! fails. Runs the reference scenario once per configuration and shares the
//! results between criteria.

use std::time::{Duration, Instant};

use hto_sim::control::FeedbackSource;
use hto_sim::estimator::{
    self, jacobian_f, jacobian_g, jacobian_h, measure, observability_rank, simplified_rhs, EstimatorInputs,
    N_MEAS, N_STATES,
};
use hto_sim::io::cli::{prepare, Prepared};
use hto_sim::io::timeseries::{read_records, replay_samples, write_records};
use hto_sim::io::Config;
use hto_sim::numerics::Matrix;
use hto_sim::plant::{self, PlantParams};
use hto_sim::scenario::{self, RunResult, ScenarioConfig, Simulator, TimeSeriesRecord};
use hto_sim::tuning;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances.
const OPEN_LOOP_T2: (f64, f64) = (29.0, 31.0);
const OPEN_LOOP_T1_MIN: f64 = 29.0;
const RUNTIME_LIMIT: Duration = Duration::from_secs(10);
const RATIO_MIN: f64 = 5.0;
const EST_T1_MAX: f64 = 3.0;
const MEAS_T2_MAX: f64 = 5.0;
const DELAY_MIN_S: f64 = 120.0;
const RMSE_MAX: f64 = 0.10;
const INFLOW_TOL: f64 = 0.01;
const INFLOW_TIME_S: f64 = 120.0;
const JACOBIAN_RTOL: f64 = 1e-5;
const JACOBIAN_RUNTIME: Duration = Duration::from_secs(1);
const CLOSURE_MAX: f64 = 1e-9;
const BALANCE_FACTOR: f64 = 10.0;
const PSD_FLOOR: f64 = -1e-10;
const SYMMETRY_MAX: f64 = 1e-12;
const T_OOB_SHIFT_MAX: f64 = 0.1;
const TRACE_SHIFT_MAX: f64 = 1e-4;
const REPLAY_TOL: f64 = 1e-9;
const OUTER_RATIO: (f64, f64) = (12.0, 18.0);

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn timed_runs(prep: &Prepared, pp: &PlantParams, cfg: &Config, base: &ScenarioConfig) -> Vec<(RunResult, Duration)> {
    scenario::table1_configs(base)
        .iter()
        .map(|sc| {
            let ctl = prep.controllers.for_source(sc.feedback_source);
            let start = Instant::now();
            let r = scenario::run(sc, pp, &ctl, &cfg.noise).expect("scenario run");
            (r, start.elapsed())
        })
        .collect()
}

fn csv(r: &RunResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&r.records, &mut buf).expect("csv");
    buf
}

fn first_crossing(records: &[TimeSeriesRecord], after: f64, limit: f64, f: impl Fn(&TimeSeriesRecord) -> f64) -> Option<f64> {
    records.iter().find(|r| r.t >= after - 1e-9 && f(r) > limit).map(|r| r.t)
}

fn relative_rmse(records: &[TimeSeriesRecord], window: (f64, f64)) -> f64 {
    let seg: Vec<_> = records.iter().filter(|r| r.t >= window.0 && r.t < window.1).collect();
    let err: f64 = seg.iter().map(|r| (r.hto_hat - r.pipe_hto()).powi(2)).sum::<f64>() / seg.len() as f64;
    let mag: f64 = seg.iter().map(|r| r.pipe_hto().powi(2)).sum::<f64>() / seg.len() as f64;
    (err / mag).sqrt()
}

/// Largest relative difference of the true and estimated HTO traces.
fn trace_shift(a: &RunResult, b: &RunResult) -> f64 {
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.records.iter().zip(&b.records) {
        for (x, y) in ra.hto.iter().zip(&rb.hto).chain(std::iter::once((&ra.hto_hat, &rb.hto_hat))) {
            worst = worst.max((x - y).abs() / x.abs().max(f64::MIN_POSITIVE));
        }
    }
    worst
}

/// Central differences of `g` around `at` with per-coordinate scales.
fn central(g: impl Fn(&[f64]) -> [f64; N_STATES], at: &[f64], scale: &[f64]) -> Matrix {
    let mut j = Matrix::zeros(N_STATES, at.len());
    for c in 0..at.len() {
        let h = 1e-6 * scale[c];
        let (mut p, mut m) = (at.to_vec(), at.to_vec());
        p[c] += h;
        m[c] -= h;
        let (fp, fm) = (g(&p), g(&m));
        for r in 0..N_STATES {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Elementwise relative mismatch with a floor tied to the matrix magnitude.
fn mismatch(analytic: &Matrix, oracle: &Matrix) -> f64 {
    let floor = oracle.abs().max() * 1e-9;
    analytic
        .iter()
        .zip(oracle.iter())
        .map(|(a, o)| (a - o).abs() / o.abs().max(floor).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn jacobian_check(pp: &PlantParams, base: &ScenarioConfig) -> (f64, Duration) {
    let model = scenario::estimator_model(base, pp);
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let h_oracle = {
        let mut h = Matrix::zeros(N_MEAS, N_STATES);
        let x0 = [20.0, 0.5, 0.01, 0.99, 0.03, 3.0];
        for c in 0..N_STATES {
            let mut p = x0;
            p[c] += 1e-3;
            let (yp, y0) = (measure(&p), measure(&x0));
            for r in 0..N_MEAS {
                h[(r, c)] = (yp[r] - y0[r]) / 1e-3;
            }
        }
        h
    };
    worst = worst.max(mismatch(&jacobian_h(), &h_oracle));
    for _ in 0..20 {
        let x_h2: f64 = rng.gen_range(1e-4..0.05);
        let n_o2: f64 = rng.gen_range(0.5..4.0);
        let x = [
            rng.gen_range(8.0..22.0),
            rng.gen_range(0.2..0.8),
            x_h2,
            1.0 - x_h2,
            n_o2 * rng.gen_range(0.0..0.05),
            n_o2,
        ];
        let u = EstimatorInputs {
            n_out_gas: n_o2 * rng.gen_range(0.5..1.5),
            m_lye: base.nominal.m_in * rng.gen_range(0.8..1.2),
        };
        let flow = x[4] + x[5];
        // Euler transition z + t_s·rhs(z, u): difference the increment (and
        // add the identity for F), so the small composition terms stay above
        // the rounding of the state itself.
        let fd_f = central(
            |z| simplified_rhs(&z.try_into().unwrap(), &u, &model).unwrap().map(|r| model.t_s * r),
            &x,
            &[x[0], x[1], 1.0, 1.0, flow, flow],
        ) + Matrix::identity(N_STATES, N_STATES);
        let fd_g = central(
            |v| {
                let uu = EstimatorInputs {
                    n_out_gas: v[0],
                    m_lye: v[1],
                };
                simplified_rhs(&x, &uu, &model).unwrap().map(|r| model.t_s * r)
            },
            &[u.n_out_gas, u.m_lye],
            &[u.n_out_gas, u.m_lye],
        );
        worst = worst.max(mismatch(&jacobian_f(&x, &u, &model).unwrap(), &fd_f));
        worst = worst.max(mismatch(&jacobian_g(&x, &u, &model).unwrap(), &fd_g));
    }
    (worst, start.elapsed())
}

/// Worst relative inflow error after `INFLOW_TIME_S` when the filter starts
/// with inflows 20 % off at constant nominal conditions, and whether the
/// error norm decreased monotonically after the first 10 s until it reached
/// the steady floor.
fn inflow_convergence(pp: &PlantParams, cfg: &Config) -> (f64, bool) {
    let sc = ScenarioConfig {
        duration: 300.0,
        events: Vec::new(),
        noise_enabled: Some(false),
        ..cfg.scenario.clone()
    };
    let mut sim = Simulator::new(&sc, pp, &cfg.noise).expect("simulator");
    sim.ekf.state.x[estimator::IDX_NH2] *= 1.2;
    sim.ekf.state.x[estimator::IDX_NO2] *= 0.8;
    let u = sim.nominal_inputs();
    let mut worst: f64 = 0.0;
    let mut last = f64::INFINITY;
    let mut monotone = true;
    for k in 0..=sc.intervals() {
        let y = sim.sense();
        sim.estimate(&y).expect("estimate");
        let s = sim.state();
        let (o2, h2) = plant::stack_effluent(&u, s.pressure_bar(0), pp).expect("effluent");
        let x = &sim.ekf.state.x;
        let e_h2 = (x[estimator::IDX_NH2] - h2).abs() / h2;
        let e_o2 = (x[estimator::IDX_NO2] - o2).abs() / o2;
        let norm = ((x[estimator::IDX_NH2] - h2).powi(2) + (x[estimator::IDX_NO2] - o2).powi(2)).sqrt();
        // Below 1e-5 of the flow the error sits at the model-mismatch floor.
        if sim.t() >= 10.0 && norm > 1e-5 * o2 {
            if norm > last {
                monotone = false;
            }
            last = norm;
        }
        if sim.t() >= INFLOW_TIME_S {
            worst = worst.max(e_h2).max(e_o2);
        }
        if k < sc.intervals() {
            sim.actuate(u.n_out_gas, u.m_lye).expect("actuate");
        }
    }
    (worst, monotone)
}

fn main() {
    let total = Instant::now();
    let cfg = Config::default();
    let pp = cfg.plant.clone();
    let prep = prepare(&cfg).expect("calibration and tuning");
    let base = prep.scenario.clone();
    let mut out = Vec::new();

    let (table, runs) = scenario::run_table1(&base, &pp, |s| prep.controllers.for_source(s), &cfg.noise).expect("table1");
    let [open, _, est] = &runs;
    print!("{}", table.render());

    let halved_cfg = ScenarioConfig {
        integrator: hto_sim::numerics::IntegratorConfig {
            max_step: base.integrator.max_step / 2.0,
            ..base.integrator
        },
        ..base.clone()
    };
    let (halved_table, halved) =
        scenario::run_table1(&halved_cfg, &pp, |s| prep.controllers.for_source(s), &cfg.noise).expect("halved table1");
    let reruns = timed_runs(&prep, &pp, &cfg, &base);

    // 1
    let slowest = reruns.iter().map(|(_, d)| *d).max().unwrap();
    let t1 = &table.open_loop;
    out.push(Outcome {
        id: 1,
        name: "open-loop t_OOB and runtime",
        pass: t1[1] >= OPEN_LOOP_T2.0 && t1[1] <= OPEN_LOOP_T2.1 && t1[0] >= OPEN_LOOP_T1_MIN && slowest < RUNTIME_LIMIT,
        detail: format!(
            "t_OOB1 = {:.2} min (>= {OPEN_LOOP_T1_MIN}), t_OOB2 = {:.2} min (in [{}, {}]), slowest scenario {:.2} s (< {} s)",
            t1[0],
            t1[1],
            OPEN_LOOP_T2.0,
            OPEN_LOOP_T2.1,
            slowest.as_secs_f64(),
            RUNTIME_LIMIT.as_secs()
        ),
    });

    // 2
    out.push(Outcome {
        id: 2,
        name: "closed-loop ordering",
        pass: table.ordering_holds(),
        detail: format!(
            "event 1: {:.2} < {:.2} < {:.2}; event 2: {:.2} < {:.2} < {:.2}",
            table.estimate_feedback[0],
            table.measurement_feedback[0],
            table.open_loop[0],
            table.estimate_feedback[1],
            table.measurement_feedback[1],
            table.open_loop[1]
        ),
    });

    // 3
    let ratio = table.ratios()[0];
    out.push(Outcome {
        id: 3,
        name: "disturbance-1 ratio",
        pass: ratio >= RATIO_MIN && table.estimate_feedback[0] <= EST_T1_MAX,
        detail: format!(
            "measurement/estimate = {ratio:.2} (>= {RATIO_MIN}), estimate t_OOB1 = {:.2} min (<= {EST_T1_MAX})",
            table.estimate_feedback[0]
        ),
    });

    // 4
    out.push(Outcome {
        id: 4,
        name: "disturbance-2 improvement",
        pass: table.estimate_feedback[1] <= table.measurement_feedback[1] && table.measurement_feedback[1] <= MEAS_T2_MAX,
        detail: format!(
            "estimate {:.2} <= measurement {:.2} <= {MEAS_T2_MAX} min",
            table.estimate_feedback[1], table.measurement_feedback[1]
        ),
    });

    // 5
    let event1 = base.events[0];
    let al = base.alarm_limit;
    let pipe_cross = first_crossing(&open.records, event1.t_start, al, |r| r.pipe_hto());
    let sep_cross = first_crossing(&open.records, event1.t_start, al, |r| r.separator_hto());
    let lead = match (pipe_cross, sep_cross) {
        (Some(p), Some(s)) => s - p,
        _ => f64::NAN,
    };
    out.push(Outcome {
        id: 5,
        name: "pipe leads separator",
        pass: lead >= DELAY_MIN_S,
        detail: format!(
            "pipe crosses AL at {:?} s, separator at {:?} s, lead {:.1} s (>= {DELAY_MIN_S})",
            pipe_cross, sep_cross, lead
        ),
    });

    // 6
    let rmse: Vec<f64> = base
        .events
        .iter()
        .map(|e| relative_rmse(&open.records, (0.5 * (e.t_start + e.t_end), e.t_end)))
        .collect();
    let (inflow_err, monotone) = inflow_convergence(&pp, &cfg);
    out.push(Outcome {
        id: 6,
        name: "estimator tracking",
        pass: rmse.iter().all(|r| *r < RMSE_MAX) && inflow_err < INFLOW_TOL,
        detail: format!(
            "relative RMSE per event {:?} (< {RMSE_MAX}); inflow error after {INFLOW_TIME_S} s = {:.2e} (< {INFLOW_TOL}), monotone after 10 s: {monotone}",
            rmse.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>(),
            inflow_err
        ),
    });

    // 7
    let (jac_err, jac_time) = jacobian_check(&pp, &base);
    out.push(Outcome {
        id: 7,
        name: "Jacobian conformance",
        pass: jac_err < JACOBIAN_RTOL && jac_time < JACOBIAN_RUNTIME,
        detail: format!(
            "worst relative mismatch {jac_err:.2e} (< {JACOBIAN_RTOL:e}) over 20 states, {:.1} ms",
            jac_time.as_secs_f64() * 1e3
        ),
    });

    // 8
    let model = scenario::estimator_model(&base, &pp);
    let x0 = scenario::estimator_initial_state(&base, &pp).unwrap().x;
    let u0 = EstimatorInputs::from_plant(&prep.scenario.nominal.steady_state(&pp).unwrap().1);
    let mut ranks = vec![observability_rank(&x0, &u0, &model).unwrap()];
    let n = open.records.len();
    for k in 0..10 {
        let r = &open.records[(2 * k + 1) * (n - 1) / 20];
        let x = [r.y.p_bar, r.y.level, r.y.x_h2, r.y.x_o2, r.n_h2_hat, r.n_o2_hat];
        let u = EstimatorInputs {
            n_out_gas: r.n_out_gas,
            m_lye: r.m_lye,
        };
        ranks.push(observability_rank(&x, &u, &model).unwrap());
    }
    out.push(Outcome {
        id: 8,
        name: "observability",
        pass: ranks.iter().all(|r| *r == N_STATES),
        detail: format!("ranks at nominal and 10 trajectory points: {ranks:?}"),
    });

    // 9
    let all: Vec<&RunResult> = runs.iter().chain(halved.iter()).chain(reruns.iter().map(|(r, _)| r)).collect();
    let closure = all.iter().map(|r| r.summary.max_closure_error).fold(0.0, f64::max);
    let balance = all
        .iter()
        .flat_map(|r| r.summary.balance_error_per_event.iter().copied())
        .fold(0.0, f64::max);
    let balance_limit = BALANCE_FACTOR * base.integrator.rel_tol;
    let asym = all.iter().map(|r| r.summary.max_covariance_asymmetry).fold(0.0, f64::max);
    let eig = all
        .iter()
        .map(|r| r.summary.min_covariance_eigen_ratio)
        .fold(f64::INFINITY, f64::min);
    out.push(Outcome {
        id: 9,
        name: "conservation and covariance",
        pass: closure < CLOSURE_MAX && balance < balance_limit && asym <= SYMMETRY_MAX && eig >= PSD_FLOOR,
        detail: format!(
            "closure {closure:.2e} (< {CLOSURE_MAX:e}), balance {balance:.2e} (< {balance_limit:.0e}), P asymmetry {asym:.1e}, min eig/trace {eig:.2e} (>= {PSD_FLOOR:e})"
        ),
    });

    // 10
    let t_shift = [
        (&table.open_loop, &halved_table.open_loop),
        (&table.measurement_feedback, &halved_table.measurement_feedback),
        (&table.estimate_feedback, &halved_table.estimate_feedback),
    ]
    .iter()
    .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
    .fold(0.0, f64::max);
    let h_shift = runs.iter().zip(&halved).map(|(a, b)| trace_shift(a, b)).fold(0.0, f64::max);
    out.push(Outcome {
        id: 10,
        name: "step-size robustness",
        pass: t_shift < T_OOB_SHIFT_MAX && h_shift < TRACE_SHIFT_MAX,
        detail: format!(
            "max t_OOB change {t_shift:.3} min (< {T_OOB_SHIFT_MAX}), max HTO trace change {h_shift:.2e} (< {TRACE_SHIFT_MAX:e})"
        ),
    });

    // 11
    let identical = runs.iter().zip(&reruns).all(|(a, (b, _))| csv(a) == csv(b));
    let bytes = csv(est);
    let back = read_records(bytes.as_slice()).expect("read back");
    let replayed = estimator::replay(&model, &cfg.noise, scenario::estimator_initial_state(&base, &pp).unwrap(), &replay_samples(&back))
        .expect("replay");
    let replay_err = replayed
        .iter()
        .zip(&est.records)
        .map(|((_, h), r)| (h - r.hto_hat).abs())
        .fold(0.0, f64::max);
    out.push(Outcome {
        id: 11,
        name: "determinism and replay",
        pass: identical && replay_err <= REPLAY_TOL,
        detail: format!("byte-identical CSVs across reruns: {identical}; replay max |diff| {replay_err:.2e} (<= {REPLAY_TOL:e})"),
    });

    // 12
    let report = prep.tuning.as_ref().expect("controllers were tuned");
    let inner = report.inner_response_time();
    let mut ratios = Vec::new();
    for src in [FeedbackSource::Estimate, FeedbackSource::Measurement] {
        let (m, _) = tuning::outer_loop_step_test(&cfg.scenario, &pp, &cfg.noise, &prep.controllers.for_source(src), 0.05)
            .expect("outer-loop step test");
        ratios.push((m.tau + m.theta) / inner);
    }
    let tight = (report.pc.tau_c - report.pc.theta).abs() <= 1e-12 * report.pc.theta;
    out.push(Outcome {
        id: 12,
        name: "tuning conformance",
        pass: tight && ratios.iter().all(|r| *r >= OUTER_RATIO.0 && *r <= OUTER_RATIO.1),
        detail: format!(
            "outer/inner closed-loop time (estimate, measurement) = ({:.2}, {:.2}) in [{}, {}]; PC tau_c = theta = {:.3} s: {tight}",
            ratios[0], ratios[1], OUTER_RATIO.0, OUTER_RATIO.1, report.pc.theta
        ),
    });

    let mut failed = 0;
    for o in &out {
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria pass ({:.1} s)",
        out.len() - failed,
        out.len(),
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
