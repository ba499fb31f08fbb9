//! Commissioning of the three loops by step tests on the simulated plant:
//! pressure first (open loop), then level, then the concentration master on
//! top of the closed pressure loop, once per feedback source.

use serde::{Deserialize, Serialize};

use crate::control::{
    identify_foptd, identify_integrating, simc_tune, simc_tune_integrating, Cascade, CascadeConfig, FeedbackSource,
    FoptdModel, IntegratingModel, PiController, PiTuning, StepResponse, DEFAULT_HTO_SP,
};
use crate::error::{Error, Result};
use crate::estimator::NoiseConfig;
use crate::plant::{self, PlantParams};
use crate::scenario::{LoopMode, ScenarioConfig, Simulator};

/// Knobs of the commissioning procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSettings {
    /// Gas-outflow step for the pressure test, fraction of nominal.
    pub pc_step_fraction: f64,
    /// Measurement filter on the pressure loop, s.
    pub pc_filter_tau: f64,
    /// Proportional setpoint weight of the pressure loop.
    pub pc_setpoint_weight: f64,
    /// Upper limit of the gas outflow, multiple of nominal.
    pub pc_out_max_factor: f64,
    /// Lye-outflow step for the level test, fraction of nominal.
    pub lc_step_fraction: f64,
    /// Closed-loop time constant of the level loop, s.
    pub lc_tau_c: f64,
    /// Pressure-setpoint step for the concentration tests, bar.
    pub cc_step_bar: f64,
    /// Outer closed-loop time over inner closed-loop time.
    pub outer_to_inner_ratio: f64,
    pub hto_sp: f64,
    pub p_sp_min: f64,
    pub p_sp_max: f64,
}

impl Default for TuningSettings {
    fn default() -> Self {
        Self {
            pc_step_fraction: 0.05,
            pc_filter_tau: 1.0,
            pc_setpoint_weight: 1.0,
            pc_out_max_factor: 2.5,
            lc_step_fraction: 0.05,
            lc_tau_c: 60.0,
            cc_step_bar: -1.0,
            outer_to_inner_ratio: 15.0,
            hto_sp: DEFAULT_HTO_SP,
            p_sp_min: 5.0,
            p_sp_max: 20.0,
        }
    }
}

/// Identified model and resulting PI parameters of one loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopTuning {
    /// Process gain (`k` for self-regulating, `k′` for integrating models).
    pub k: f64,
    /// Time constant, s; `None` for integrating models.
    pub tau: Option<f64>,
    pub theta: f64,
    pub tau_c: f64,
    pub kc: f64,
    pub tau_i: f64,
}

impl LoopTuning {
    fn integrating(m: &IntegratingModel, tau_c: f64, t: &PiTuning) -> Self {
        Self {
            k: m.k_prime,
            tau: None,
            theta: m.theta,
            tau_c,
            kc: t.kc,
            tau_i: t.tau_i,
        }
    }

    fn foptd(m: &FoptdModel, tau_c: f64, t: &PiTuning) -> Self {
        Self {
            k: m.k,
            tau: Some(m.tau),
            theta: m.theta,
            tau_c,
            kc: t.kc,
            tau_i: t.tau_i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub pc: LoopTuning,
    pub lc: LoopTuning,
    /// FOPTD fit of the closed pressure loop's response to a setpoint step.
    pub inner_closed_loop: FoptdModel,
    pub cc_estimate: LoopTuning,
    pub cc_measurement: LoopTuning,
}

impl TuningReport {
    /// 63 % response time of the closed pressure loop, s.
    pub fn inner_response_time(&self) -> f64 {
        self.inner_closed_loop.tau + self.inner_closed_loop.theta
    }

    pub fn render(&self) -> String {
        let mut out = String::from("loop          model         k            tau [s]   theta [s]  tau_c [s]  Kc           tau_I [s]\n");
        let mut row = |name: &str, l: &LoopTuning| {
            let (kind, tau) = match l.tau {
                Some(t) => ("FOPTD", format!("{t:9.3}")),
                None => ("integrating", format!("{:>9}", "-")),
            };
            out.push_str(&format!(
                "{name:<13} {kind:<12} {:>12.5e} {tau}  {:9.3}  {:9.3}  {:>12.5e} {:9.3}\n",
                l.k, l.theta, l.tau_c, l.kc, l.tau_i
            ));
        };
        row("PC", &self.pc);
        row("LC", &self.lc);
        row("CC estimate", &self.cc_estimate);
        row("CC measured", &self.cc_measurement);
        out.push_str(&format!(
            "inner closed loop: tau = {:.3} s, theta = {:.3} s, 63% time = {:.3} s\n",
            self.inner_closed_loop.tau,
            self.inner_closed_loop.theta,
            self.inner_response_time()
        ));
        out
    }
}

/// Cascades for both feedback sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSet {
    pub measurement: CascadeConfig,
    pub estimate: CascadeConfig,
}

impl ControllerSet {
    pub fn for_source(&self, source: FeedbackSource) -> CascadeConfig {
        match source {
            FeedbackSource::Measurement => self.measurement.clone(),
            FeedbackSource::Estimate => self.estimate.clone(),
        }
    }
}

/// Noise-free copy of `base` of the given length, no disturbances.
fn test_config(base: &ScenarioConfig, duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration,
        events: Vec::new(),
        noise_enabled: Some(false),
        mode: LoopMode::ClosedLoop,
        ..base.clone()
    }
}

/// Replays the controller's measurement filter over a sampled signal.
fn filtered(y: &[f64], tau: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut f = y[0];
    for v in y {
        f += (v - f) * (dt / (tau + dt));
        out.push(f);
    }
    out
}

const STEP_AT: f64 = 5.0;

fn pc_step_test(base: &ScenarioConfig, pp: &PlantParams, noise: &NoiseConfig, s: &TuningSettings) -> Result<(StepResponse, f64)> {
    let cfg = test_config(base, 30.0);
    let mut sim = Simulator::new(&cfg, pp, noise)?;
    let u0 = sim.nominal_inputs();
    let du = s.pc_step_fraction * u0.n_out_gas;
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for k in 0..=cfg.intervals() {
        let m = sim.sense();
        t.push(sim.t());
        y.push(m.p_bar);
        if k < cfg.intervals() {
            let n_out = if sim.t() >= STEP_AT - 1e-9 { u0.n_out_gas + du } else { u0.n_out_gas };
            sim.actuate(n_out, u0.m_lye)?;
        }
    }
    let y = filtered(&y, s.pc_filter_tau, cfg.sample_period);
    Ok((
        StepResponse {
            t,
            y,
            step_time: STEP_AT,
            step_size: du,
        },
        u0.n_out_gas,
    ))
}

fn pressure_controller(tuning: &PiTuning, s: &TuningSettings, n_out_nominal: f64, p_sp: f64) -> Result<PiController> {
    let mut pc = PiController::from_tuning(*tuning, 0.0, s.pc_out_max_factor * n_out_nominal)?;
    pc.bias = n_out_nominal;
    pc.setpoint = p_sp;
    pc.setpoint_weight = s.pc_setpoint_weight;
    pc.pv_filter_tau = Some(s.pc_filter_tau);
    Ok(pc)
}

fn level_controller(tuning: &PiTuning, m_nominal: f64, level_sp: f64) -> Result<PiController> {
    let mut lc = PiController::from_tuning(*tuning, 0.0, 3.0 * m_nominal)?;
    lc.bias = m_nominal;
    lc.setpoint = level_sp;
    Ok(lc)
}

fn lc_step_test(
    base: &ScenarioConfig,
    pp: &PlantParams,
    noise: &NoiseConfig,
    s: &TuningSettings,
    pc: &PiController,
) -> Result<StepResponse> {
    let cfg = test_config(base, 60.0);
    let mut sim = Simulator::new(&cfg, pp, noise)?;
    let mut pc = pc.clone();
    let u0 = sim.nominal_inputs();
    let dm = s.lc_step_fraction * u0.m_lye;
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for k in 0..=cfg.intervals() {
        let m = sim.sense();
        t.push(sim.t());
        y.push(m.level);
        let n_out = pc.step(m.p_bar, cfg.sample_period);
        if k < cfg.intervals() {
            let m_lye = if sim.t() >= STEP_AT - 1e-9 { u0.m_lye + dm } else { u0.m_lye };
            sim.actuate(n_out, m_lye)?;
        }
    }
    Ok(StepResponse {
        t,
        y,
        step_time: STEP_AT,
        step_size: dm,
    })
}

/// Responses of the closed pressure loop and of the chosen concentration
/// signal to a pressure-setpoint step.
pub struct SetpointStepTest {
    pub pressure: StepResponse,
    pub hto: StepResponse,
}

/// Steps the pressure setpoint by `s.cc_step_bar` with the pressure and level
/// loops closed and records the pressure and the concentration feedback.
pub fn pressure_setpoint_step(
    base: &ScenarioConfig,
    pp: &PlantParams,
    noise: &NoiseConfig,
    s: &TuningSettings,
    inner: &CascadeConfig,
    source: FeedbackSource,
    duration: f64,
) -> Result<SetpointStepTest> {
    let cfg = ScenarioConfig {
        feedback_source: source,
        ..test_config(base, duration)
    };
    let mut sim = Simulator::new(&cfg, pp, noise)?;
    let p0 = cfg.nominal.p_bar;
    let mut cascade = Cascade::new(inner.clone(), Some(p0))?;
    let (mut t, mut p, mut h) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..=cfg.intervals() {
        let m = sim.sense();
        let hto_hat = sim.estimate(&m)?;
        let fb = match source {
            FeedbackSource::Estimate => hto_hat,
            FeedbackSource::Measurement => plant::hto(m.x_h2, m.x_o2)?,
        };
        t.push(sim.t());
        p.push(m.p_bar);
        h.push(fb);
        cascade.open_loop_p_sp = Some(if sim.t() >= STEP_AT - 1e-9 { p0 + s.cc_step_bar } else { p0 });
        let a = cascade.step(fb, m.p_bar, m.level, cfg.sample_period);
        if k < cfg.intervals() {
            sim.actuate(a.n_out_gas, a.m_lye)?;
        }
    }
    Ok(SetpointStepTest {
        pressure: StepResponse {
            t: t.clone(),
            y: p,
            step_time: STEP_AT,
            step_size: s.cc_step_bar,
        },
        hto: StepResponse {
            t,
            y: h,
            step_time: STEP_AT,
            step_size: s.cc_step_bar,
        },
    })
}

/// Length of the concentration step tests, s. The measured separator HTO
/// settles over several separator residence times.
pub const CC_TEST_DURATION: f64 = 1800.0;

/// Identifies all loops and returns the tuned cascades for both feedback
/// sources with the report.
pub fn tune(
    base: &ScenarioConfig,
    pp: &PlantParams,
    noise: &NoiseConfig,
    s: &TuningSettings,
) -> Result<(TuningReport, ControllerSet)> {
    if !(s.pc_filter_tau > 0.0 && s.outer_to_inner_ratio > 0.0 && s.cc_step_bar != 0.0) {
        return Err(Error::domain("invalid tuning settings"));
    }
    // Pressure: integrating, tight tuning with tau_c = theta.
    let (pc_resp, n_out_nominal) = pc_step_test(base, pp, noise, s)?;
    let pc_model = identify_integrating(&pc_resp)?;
    if !(pc_model.theta > 0.0) {
        return Err(Error::Identification("pressure loop shows no effective delay".into()));
    }
    let pc_tuning = simc_tune_integrating(&pc_model, pc_model.theta)?;
    let pc = pressure_controller(&pc_tuning, s, n_out_nominal, base.nominal.p_bar)?;

    // Level: integrating, smooth tuning.
    let lc_resp = lc_step_test(base, pp, noise, s, &pc)?;
    let lc_model = identify_integrating(&lc_resp)?;
    let lc_tuning = simc_tune_integrating(&lc_model, s.lc_tau_c)?;
    let lc = level_controller(&lc_tuning, base.nominal.m_in, base.nominal.level)?;

    let placeholder = PiController::new(1.0, 1.0, s.p_sp_min, s.p_sp_max)?;
    let inner = CascadeConfig {
        hto_sp: s.hto_sp,
        p_sp_min: s.p_sp_min,
        p_sp_max: s.p_sp_max,
        feedback_source: FeedbackSource::Estimate,
        cc: placeholder,
        pc: pc.clone(),
        lc: lc.clone(),
    };

    let mut inner_model = None;
    let mut tuned = Vec::new();
    for source in [FeedbackSource::Estimate, FeedbackSource::Measurement] {
        let test = pressure_setpoint_step(base, pp, noise, s, &inner, source, CC_TEST_DURATION)?;
        let inner_fit = identify_foptd(&test.pressure)?;
        let t_inner = inner_fit.tau + inner_fit.theta;
        inner_model.get_or_insert(inner_fit);
        let m = identify_foptd(&test.hto)?;
        let tau_c = (s.outer_to_inner_ratio * t_inner - m.theta).max(m.theta).max(f64::EPSILON);
        let t = simc_tune(&m, tau_c)?;
        let mut cc = PiController::from_tuning(t, s.p_sp_min, s.p_sp_max)?;
        cc.bias = s.p_sp_max;
        cc.setpoint = s.hto_sp;
        tuned.push((LoopTuning::foptd(&m, tau_c, &t), CascadeConfig {
            feedback_source: source,
            cc,
            ..inner.clone()
        }));
    }
    let (cc_meas, meas_cfg) = tuned.pop().expect("two sources");
    let (cc_est, est_cfg) = tuned.pop().expect("two sources");
    let report = TuningReport {
        pc: LoopTuning::integrating(&pc_model, pc_model.theta, &pc_tuning),
        lc: LoopTuning::integrating(&lc_model, s.lc_tau_c, &lc_tuning),
        inner_closed_loop: inner_model.expect("inner loop identified"),
        cc_estimate: cc_est,
        cc_measurement: cc_meas,
    };
    Ok((
        report,
        ControllerSet {
            measurement: meas_cfg,
            estimate: est_cfg,
        },
    ))
}

/// Closed-loop test of the full cascade: with the concentration setpoint
/// placed just below the nominal HTO so the master is active, settle, then
/// step the setpoint down by `fraction` and fit the feedback response.
pub fn outer_loop_step_test(
    base: &ScenarioConfig,
    pp: &PlantParams,
    noise: &NoiseConfig,
    controllers: &CascadeConfig,
    fraction: f64,
) -> Result<(FoptdModel, StepResponse)> {
    let settle = 900.0;
    let cfg = ScenarioConfig {
        feedback_source: controllers.feedback_source,
        ..test_config(base, settle + 900.0)
    };
    let mut sim = Simulator::new(&cfg, pp, noise)?;
    let (steady, _) = cfg.nominal.steady_state(pp)?;
    let idx = match controllers.feedback_source {
        FeedbackSource::Estimate => steady.separator() - 1,
        FeedbackSource::Measurement => steady.separator(),
    };
    let sp0 = 0.9 * steady.hto(idx)?;
    let mut cc_cfg = controllers.clone();
    cc_cfg.hto_sp = sp0;
    let mut cascade = Cascade::new(cc_cfg, None)?;
    let (mut t, mut h) = (Vec::new(), Vec::new());
    for k in 0..=cfg.intervals() {
        let m = sim.sense();
        let hto_hat = sim.estimate(&m)?;
        let fb = match controllers.feedback_source {
            FeedbackSource::Estimate => hto_hat,
            FeedbackSource::Measurement => plant::hto(m.x_h2, m.x_o2)?,
        };
        if sim.t() >= settle - 1e-9 {
            cascade.cfg.cc.setpoint = sp0 * (1.0 - fraction);
        }
        t.push(sim.t());
        h.push(fb);
        let a = cascade.step(fb, m.p_bar, m.level, cfg.sample_period);
        if k < cfg.intervals() {
            sim.actuate(a.n_out_gas, a.m_lye)?;
        }
    }
    let resp = StepResponse {
        t,
        y: h,
        step_time: settle,
        step_size: -fraction * sp0,
    };
    // Fit only the part after settling.
    let start = resp.t.iter().position(|x| *x >= settle - 30.0).unwrap_or(0);
    let tail = StepResponse {
        t: resp.t[start..].to_vec(),
        y: resp.y[start..].to_vec(),
        ..resp.clone()
    };
    Ok((identify_foptd(&tail)?, resp))
}
