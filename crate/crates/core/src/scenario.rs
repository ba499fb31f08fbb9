//! Experiment orchestration: disturbance timeline, measurement noise, the
//! truth → measure → estimate → control → actuate tick loop, disturbance
//! calibration and the time-out-of-bound metric.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{Cascade, CascadeConfig, FeedbackSource, ALARM_LIMIT};
use crate::error::{Error, Result};
use crate::estimator::{self, Ekf, EstimatorInputs, EstimatorState, Measurement, NoiseConfig, SimplifiedModel};
use crate::numerics::{Integrator, IntegratorConfig, OdeSystem};
use crate::plant::{self, PlantInputs, PlantParams, PlantState, BAR};

/// Nominal operating point around which every scenario starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// A/m².
    pub current_density: f64,
    /// bar.
    pub dp: f64,
    /// Lye feed to the separator, kg/s.
    pub m_in: f64,
    /// Separator pressure, bar.
    pub p_bar: f64,
    /// Separator level, m.
    pub level: f64,
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self {
            current_density: 2000.0,
            dp: 0.1,
            m_in: 10.75,
            p_bar: 20.0,
            level: 0.5,
        }
    }
}

impl OperatingPoint {
    pub fn inputs(&self) -> PlantInputs {
        PlantInputs {
            current_density: self.current_density,
            dp: self.dp,
            m_lye: self.m_in,
            n_out_gas: 0.0,
            m_in: self.m_in,
        }
    }

    /// Plant steady state at this point with the balancing gas outflow.
    pub fn steady_state(&self, pp: &PlantParams) -> Result<(PlantState, PlantInputs)> {
        plant::steady_state_at_pressure(self.p_bar, &self.inputs(), self.level, pp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceChannel {
    CurrentDensity,
    PressureDifference,
}

/// Input held at `value` over `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub channel: DisturbanceChannel,
    pub value: f64,
}

impl DisturbanceEvent {
    /// Event windows are evaluated on the sample grid; the slack absorbs
    /// rounding of `k·t_s`.
    pub fn active(&self, t: f64) -> bool {
        t >= self.t_start - 1e-9 && t < self.t_end - 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    /// Pressure setpoint held; pressure and level loops still closed.
    OpenLoop,
    ClosedLoop,
}

/// Everything that defines one simulated experiment except the plant
/// parameters and controller tunings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub sample_period: f64,
    pub events: Vec<DisturbanceEvent>,
    pub mode: LoopMode,
    pub feedback_source: FeedbackSource,
    pub open_loop_p_sp: f64,
    /// Standard deviations of `[p (bar), l (m), x_H2, x_O2]`.
    pub meas_noise_std: [f64; 4],
    /// `None` applies noise only in closed loop with estimate feedback.
    pub noise_enabled: Option<bool>,
    pub seed: u64,
    pub nominal: OperatingPoint,
    pub alarm_limit: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 150.0 * 60.0,
            sample_period: 0.1,
            events: Vec::new(),
            mode: LoopMode::ClosedLoop,
            feedback_source: FeedbackSource::Estimate,
            open_loop_p_sp: 20.0,
            meas_noise_std: [0.01, 0.001, 5e-4, 5e-4],
            noise_enabled: None,
            seed: 1,
            nominal: OperatingPoint::default(),
            alarm_limit: ALARM_LIMIT,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.sample_period > 0.0) {
            return Err(Error::domain("duration and sample period must be > 0"));
        }
        let ratio = self.duration / self.sample_period;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(Error::domain("duration must be a whole number of sample periods"));
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(e.t_start < e.t_end && e.t_start >= 0.0 && e.t_end <= self.duration) {
                return Err(Error::domain(format!("event {} window is empty or outside the run", i + 1)));
            }
            if !e.value.is_finite() || (e.channel == DisturbanceChannel::CurrentDensity && e.value < 0.0) {
                return Err(Error::domain(format!("event {} has an invalid level", i + 1)));
            }
        }
        if !(self.open_loop_p_sp > 0.0) {
            return Err(Error::domain("open-loop pressure setpoint must be > 0"));
        }
        if !self.meas_noise_std.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(Error::domain("measurement noise deviations must be >= 0"));
        }
        if !(self.alarm_limit > 0.0) {
            return Err(Error::domain("alarm limit must be > 0"));
        }
        self.integrator.validate()
    }

    pub fn noise_active(&self) -> bool {
        self.noise_enabled.unwrap_or(
            self.mode == LoopMode::ClosedLoop && self.feedback_source == FeedbackSource::Estimate,
        )
    }

    /// Number of sample intervals in the run.
    pub fn intervals(&self) -> usize {
        (self.duration / self.sample_period).round() as usize
    }

    /// Disturbance inputs `(I, Δp)` in force at time `t`.
    pub fn disturbances_at(&self, t: f64) -> (f64, f64) {
        let mut i = self.nominal.current_density;
        let mut dp = self.nominal.dp;
        for e in self.events.iter().filter(|e| e.active(t)) {
            match e.channel {
                DisturbanceChannel::CurrentDensity => i = e.value,
                DisturbanceChannel::PressureDifference => dp = e.value,
            }
        }
        (i, dp)
    }
}

/// Magnitudes of the two reference disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub current_density_low: f64,
    pub dp_high: f64,
    /// Open-loop steady separator HTO reached with each disturbance.
    pub hto_at_current_low: f64,
    pub hto_at_dp_high: f64,
}

/// Current-density drop over 30–60 min, pressure-difference rise over
/// 90–120 min.
pub fn reference_disturbance_sequence(calib: &Calibration) -> Vec<DisturbanceEvent> {
    vec![
        DisturbanceEvent {
            t_start: 30.0 * 60.0,
            t_end: 60.0 * 60.0,
            channel: DisturbanceChannel::CurrentDensity,
            value: calib.current_density_low,
        },
        DisturbanceEvent {
            t_start: 90.0 * 60.0,
            t_end: 120.0 * 60.0,
            channel: DisturbanceChannel::PressureDifference,
            value: calib.dp_high,
        },
    ]
}

/// Open-loop steady separator HTO at the nominal pressure and level with one
/// input changed.
fn steady_separator_hto(nominal: &OperatingPoint, pp: &PlantParams, current: f64, dp: f64) -> Result<f64> {
    let op = OperatingPoint {
        current_density: current,
        dp,
        ..*nominal
    };
    let (s, _) = op.steady_state(pp)?;
    s.hto(s.separator())
}

/// Bisects the current density (downward) and the pressure difference
/// (upward) so that the open-loop steady separator HTO lands in
/// `[target, 1.2·target]`.
pub fn calibrate_disturbances(pp: &PlantParams, nominal: &OperatingPoint, target_hto: f64) -> Result<Calibration> {
    let base = steady_separator_hto(nominal, pp, nominal.current_density, nominal.dp)?;
    if !(target_hto > base) {
        return Err(Error::Calibration(format!(
            "target HTO {target_hto} is not above the nominal {base:.5}"
        )));
    }
    let aim = 1.1 * target_hto;
    let in_band = |h: f64| h >= target_hto && h <= 1.2 * target_hto;

    // HTO falls with current density: bracket [lo, hi] with hto(lo) > aim.
    let hto_at_i = |i: f64| steady_separator_hto(nominal, pp, i, nominal.dp);
    let (mut lo, mut hi) = (nominal.current_density, nominal.current_density);
    let mut halvings = 0;
    while hto_at_i(lo).map_err(|e| Error::Calibration(format!("current density cannot raise HTO to the target: {e}")))? < aim {
        hi = lo;
        lo *= 0.5;
        halvings += 1;
        if halvings > 30 {
            return Err(Error::Calibration("current density cannot raise HTO to the target".into()));
        }
    }
    let mut current = hi;
    let mut hto_i = base;
    for _ in 0..200 {
        current = 0.5 * (lo + hi);
        hto_i = hto_at_i(current)?;
        if in_band(hto_i) && (hto_i - aim).abs() < 1e-3 * aim {
            break;
        }
        if hto_i > aim {
            lo = current;
        } else {
            hi = current;
        }
    }

    // HTO rises with the pressure difference.
    let hto_at_dp = |dp: f64| steady_separator_hto(nominal, pp, nominal.current_density, dp);
    let (mut lo, mut hi) = (nominal.dp, nominal.dp.max(0.01));
    let mut grow = 0;
    while hto_at_dp(hi)? < aim {
        hi *= 2.0;
        grow += 1;
        if grow > 30 {
            return Err(Error::Calibration("pressure difference cannot raise HTO to the target".into()));
        }
    }
    let mut dp = hi;
    let mut hto_dp = base;
    for _ in 0..200 {
        dp = 0.5 * (lo + hi);
        hto_dp = hto_at_dp(dp)?;
        if in_band(hto_dp) && (hto_dp - aim).abs() < 1e-3 * aim {
            break;
        }
        if hto_dp < aim {
            lo = dp;
        } else {
            hi = dp;
        }
    }
    if !(in_band(hto_i) && in_band(hto_dp)) {
        return Err(Error::Calibration("bisection did not reach the target band".into()));
    }
    Ok(Calibration {
        current_density_low: current,
        dp_high: dp,
        hto_at_current_low: hto_i,
        hto_at_dp_high: hto_dp,
    })
}

/// One sample of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub t: f64,
    /// True HTO per compartment, separator last.
    pub hto: Vec<f64>,
    /// HTO computed from the (possibly noisy) separator measurement.
    pub hto_meas: f64,
    /// EKF estimate of the pipe HTO.
    pub hto_hat: f64,
    pub n_h2_hat: f64,
    pub n_o2_hat: f64,
    /// Compartment pressures, bar.
    pub pressure: Vec<f64>,
    pub level: f64,
    pub p_sp: f64,
    pub n_out_gas: f64,
    pub m_lye: f64,
    pub current_density: f64,
    pub dp: f64,
    pub alarm: Vec<bool>,
    /// Measurement handed to the estimator.
    pub y: Measurement,
    /// Largest `|x_H2 + x_O2 − 1|` over compartments.
    pub closure_error: f64,
    /// Total gas holdup of the train, mol.
    pub holdup: f64,
    /// Cumulative stack effluent since t = 0, mol.
    pub cum_in: f64,
    /// Cumulative gas outflow plus dissolved O₂, mol.
    pub cum_out: f64,
}

impl TimeSeriesRecord {
    pub fn max_true_hto(&self) -> f64 {
        self.hto.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn pipe_hto(&self) -> f64 {
        self.hto[self.hto.len() - 2]
    }

    pub fn separator_hto(&self) -> f64 {
        self.hto[self.hto.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub peak_hto_pipe: f64,
    pub peak_hto_separator: f64,
    pub max_closure_error: f64,
    pub max_covariance_asymmetry: f64,
    /// Smallest eigenvalue of P over its trace, minimum over the run.
    pub min_covariance_eigen_ratio: f64,
    /// Per event: |Δholdup − (in − out)| over the window, relative to the
    /// effluent in the window.
    pub balance_error_per_event: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<TimeSeriesRecord>,
    /// Minutes per event.
    pub t_oob_per_event: Vec<f64>,
    pub summary: RunSummary,
}

/// Total sampled time (minutes) in `[t_start, t_end)` during which the true
/// HTO of any compartment exceeds `alarm_limit`.
pub fn t_oob(records: &[TimeSeriesRecord], alarm_limit: f64, window: (f64, f64)) -> f64 {
    if records.len() < 2 {
        return 0.0;
    }
    let dt = records[1].t - records[0].t;
    let count = records
        .iter()
        .filter(|r| r.t >= window.0 - 1e-9 && r.t < window.1 - 1e-9)
        .filter(|r| r.max_true_hto() > alarm_limit)
        .count();
    count as f64 * dt / 60.0
}

/// Rounds to 9 significant digits, the precision of every logged value.
/// Estimator inputs pass through this so a replay from the CSV is exact.
pub fn log_precision(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Plant ODE with two quadrature states appended: cumulative hydrogen
/// crossover and cumulative dissolved-O₂ loss.
struct TrackedPlant<'a> {
    params: &'a PlantParams,
    inputs: PlantInputs,
}

impl OdeSystem for TrackedPlant<'_> {
    fn dim(&self) -> usize {
        3 * self.params.n_compartments() + 3
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = 3 * self.params.n_compartments() + 1;
        plant::plant_rhs_slice(&y[..n], &self.inputs, self.params, &mut dy[..n])?;
        let sep = self.params.n_compartments() - 1;
        let (_, h2) = plant::stack_effluent(&self.inputs, y[0] / BAR, self.params)?;
        dy[n] = h2;
        dy[n + 1] = plant::dissolved_o2_sink(self.inputs.m_lye, y[sep] / BAR, self.params);
        Ok(())
    }
}

/// Gaussian measurement noise, one ChaCha stream per channel.
struct NoiseSource {
    streams: Vec<(ChaCha8Rng, Option<Normal<f64>>)>,
}

impl NoiseSource {
    fn new(seed: u64, std: [f64; 4], enabled: bool) -> Result<Self> {
        let mut streams = Vec::with_capacity(4);
        for (ch, s) in std.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ch as u64 + 1);
            let dist = if enabled && *s > 0.0 {
                Some(Normal::new(0.0, *s).map_err(|e| Error::domain(e.to_string()))?)
            } else {
                None
            };
            streams.push((rng, dist));
        }
        Ok(Self { streams })
    }

    fn corrupt(&mut self, y: Measurement) -> Measurement {
        let mut v = y.as_array();
        for (x, (rng, dist)) in v.iter_mut().zip(self.streams.iter_mut()) {
            if let Some(d) = dist {
                *x += d.sample(rng);
            }
        }
        Measurement::from_array(v)
    }
}

/// Truth plant plus estimator advanced on the sample grid. Controllers are
/// kept outside so that tuning experiments can drive the inputs directly.
pub struct Simulator<'a> {
    pub pp: &'a PlantParams,
    pub cfg: &'a ScenarioConfig,
    y: Vec<f64>,
    integrator: Integrator,
    pub ekf: Ekf,
    noise: NoiseSource,
    tick: usize,
    cum_o2: f64,
    cum_vent: f64,
    nominal_inputs: PlantInputs,
}

impl<'a> Simulator<'a> {
    /// Starts at the plant steady state of the nominal operating point, with
    /// the estimator initialized from it.
    pub fn new(cfg: &'a ScenarioConfig, pp: &'a PlantParams, noise: &NoiseConfig) -> Result<Self> {
        cfg.validate()?;
        pp.validate()?;
        let (steady, inputs) = cfg.nominal.steady_state(pp)?;
        let ekf = Ekf::new(estimator_model(cfg, pp), noise.clone(), estimator::initialize(&steady, &inputs, pp)?)?;
        let mut y = steady.to_vec();
        y.extend([0.0, 0.0]);
        Ok(Self {
            pp,
            cfg,
            y,
            integrator: Integrator::new(cfg.integrator),
            ekf,
            noise: NoiseSource::new(cfg.seed, cfg.meas_noise_std, cfg.noise_active())?,
            tick: 0,
            cum_o2: 0.0,
            cum_vent: 0.0,
            nominal_inputs: inputs,
        })
    }

    /// Inputs that hold the nominal steady state.
    pub fn nominal_inputs(&self) -> PlantInputs {
        self.nominal_inputs
    }

    pub fn t(&self) -> f64 {
        self.tick as f64 * self.cfg.sample_period
    }

    pub fn state(&self) -> PlantState {
        PlantState::from_slice(self.pp.n_compartments(), &self.y[..3 * self.pp.n_compartments() + 1])
    }

    /// Separator measurement at the current tick, with noise if enabled,
    /// rounded to logging precision.
    pub fn sense(&mut self) -> Measurement {
        let y = self.noise.corrupt(Measurement::of_plant(&self.state()));
        Measurement::from_array(y.as_array().map(log_precision))
    }

    /// Estimator cycle for the current tick; returns ĤTO_n.
    pub fn estimate(&mut self, y: &Measurement) -> Result<f64> {
        let t = self.t();
        self.ekf.step(y).map_err(|e| e.at(t))
    }

    /// Holds `n_out_gas`, `m_lye` and the scheduled disturbances over one
    /// sample period and advances the plant.
    pub fn actuate(&mut self, n_out_gas: f64, m_lye: f64) -> Result<()> {
        let t0 = self.t();
        let t1 = (self.tick + 1) as f64 * self.cfg.sample_period;
        let u = self.inputs_at(t0, n_out_gas, m_lye);
        self.ekf.apply_input(EstimatorInputs {
            n_out_gas: log_precision(n_out_gas),
            m_lye: log_precision(m_lye),
        });
        let ode = TrackedPlant {
            params: self.pp,
            inputs: u,
        };
        self.integrator.advance(&ode, &mut self.y, t0, t1).map_err(|e| e.at(t0))?;
        let dt = t1 - t0;
        self.cum_o2 += plant::production_rate(u.current_density, &self.pp.o2, self.pp)? * dt;
        self.cum_vent += n_out_gas * dt;
        self.tick += 1;
        Ok(())
    }

    pub fn inputs_at(&self, t: f64, n_out_gas: f64, m_lye: f64) -> PlantInputs {
        let (current_density, dp) = self.cfg.disturbances_at(t);
        PlantInputs {
            current_density,
            dp,
            m_lye,
            n_out_gas,
            m_in: self.cfg.nominal.m_in,
        }
    }

    fn holdup(&self, s: &PlantState) -> Result<f64> {
        let (v_sep, _) = plant::gas_volume(s.level, self.pp)?;
        let sep = s.separator();
        Ok(s.pressure
            .iter()
            .enumerate()
            .map(|(i, p)| p * if i == sep { v_sep } else { self.pp.segment_volume() })
            .sum::<f64>()
            / self.pp.rt())
    }

    /// Snapshot of truth, measurement, estimate and actuation.
    pub fn record(&self, y: &Measurement, hto_hat: f64, p_sp: f64, n_out_gas: f64, m_lye: f64) -> Result<TimeSeriesRecord> {
        let t = self.t();
        let s = self.state();
        s.check_invariants(self.pp).map_err(|e| e.at(t))?;
        let hto = s.hto_profile().map_err(|e| e.at(t))?;
        let (current_density, dp) = self.cfg.disturbances_at(t);
        let n = 3 * self.pp.n_compartments() + 1;
        Ok(TimeSeriesRecord {
            t,
            alarm: hto.iter().map(|h| *h > self.cfg.alarm_limit).collect(),
            hto,
            hto_meas: plant::hto(y.x_h2, y.x_o2).unwrap_or(f64::INFINITY),
            hto_hat,
            n_h2_hat: self.ekf.state.x[estimator::IDX_NH2],
            n_o2_hat: self.ekf.state.x[estimator::IDX_NO2],
            pressure: s.pressure.iter().map(|p| p / BAR).collect(),
            level: s.level,
            p_sp,
            n_out_gas,
            m_lye,
            current_density,
            dp,
            y: *y,
            closure_error: s
                .x_h2
                .iter()
                .zip(&s.x_o2)
                .map(|(a, b)| (a + b - 1.0).abs())
                .fold(0.0, f64::max),
            holdup: self.holdup(&s)?,
            cum_in: self.cum_o2 + self.y[n],
            cum_out: self.cum_vent + self.y[n + 1],
        })
    }
}

/// Separator model used by the estimator for this scenario.
pub fn estimator_model(cfg: &ScenarioConfig, pp: &PlantParams) -> SimplifiedModel {
    SimplifiedModel {
        params: pp.clone(),
        m_in: cfg.nominal.m_in,
        t_s: cfg.sample_period,
    }
}

/// Initial estimator state for this scenario.
pub fn estimator_initial_state(cfg: &ScenarioConfig, pp: &PlantParams) -> Result<EstimatorState> {
    let (steady, inputs) = cfg.nominal.steady_state(pp)?;
    estimator::initialize(&steady, &inputs, pp)
}

/// Runs one scenario with the given controllers.
pub fn run(cfg: &ScenarioConfig, pp: &PlantParams, controllers: &CascadeConfig, noise: &NoiseConfig) -> Result<RunResult> {
    let mut sim = Simulator::new(cfg, pp, noise)?;
    let mut cascade_cfg = controllers.clone();
    cascade_cfg.feedback_source = cfg.feedback_source;
    let open = match cfg.mode {
        LoopMode::OpenLoop => Some(cfg.open_loop_p_sp),
        LoopMode::ClosedLoop => None,
    };
    let mut cascade = Cascade::new(cascade_cfg, open)?;
    let n = cfg.intervals();
    let mut records = Vec::with_capacity(n + 1);
    let mut max_asym: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for k in 0..=n {
        let y = sim.sense();
        let hto_hat = sim.estimate(&y)?;
        let (asym, eig) = sim.ekf.state.covariance_health();
        max_asym = max_asym.max(asym);
        min_eig = min_eig.min(eig);
        let feedback = match cfg.feedback_source {
            FeedbackSource::Estimate => hto_hat,
            FeedbackSource::Measurement => plant::hto(y.x_h2, y.x_o2).map_err(|e| e.at(sim.t()))?,
        };
        let act = cascade.step(feedback, y.p_bar, y.level, cfg.sample_period);
        records.push(sim.record(&y, hto_hat, act.p_sp, act.n_out_gas, act.m_lye)?);
        if k < n {
            sim.actuate(act.n_out_gas, act.m_lye)?;
        }
    }
    Ok(finish(cfg, records, max_asym, min_eig))
}

fn finish(cfg: &ScenarioConfig, records: Vec<TimeSeriesRecord>, max_asym: f64, min_eig: f64) -> RunResult {
    let t_oob_per_event = cfg
        .events
        .iter()
        .map(|e| t_oob(&records, cfg.alarm_limit, (e.t_start, e.t_end)))
        .collect();
    let at = |t: f64| {
        records
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("records are nonempty")
    };
    let balance_error_per_event = cfg
        .events
        .iter()
        .map(|e| {
            let (a, b) = (at(e.t_start), at(e.t_end));
            let inflow = b.cum_in - a.cum_in;
            let net = inflow - (b.cum_out - a.cum_out);
            ((b.holdup - a.holdup) - net).abs() / inflow.abs().max(f64::MIN_POSITIVE)
        })
        .collect();
    let summary = RunSummary {
        peak_hto_pipe: records.iter().map(|r| r.pipe_hto()).fold(f64::NEG_INFINITY, f64::max),
        peak_hto_separator: records.iter().map(|r| r.separator_hto()).fold(f64::NEG_INFINITY, f64::max),
        max_closure_error: records.iter().map(|r| r.closure_error).fold(0.0, f64::max),
        max_covariance_asymmetry: max_asym,
        min_covariance_eigen_ratio: min_eig,
        balance_error_per_event,
    };
    RunResult {
        records,
        t_oob_per_event,
        summary,
    }
}

/// t_OOB of the three Table-1 modes on identical events and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub open_loop: Vec<f64>,
    pub measurement_feedback: Vec<f64>,
    pub estimate_feedback: Vec<f64>,
}

impl Table1 {
    /// Measurement-feedback over estimate-feedback t_OOB per event.
    pub fn ratios(&self) -> Vec<f64> {
        self.measurement_feedback
            .iter()
            .zip(&self.estimate_feedback)
            .map(|(m, e)| if *e > 0.0 { m / e } else { f64::INFINITY })
            .collect()
    }

    pub fn ordering_holds(&self) -> bool {
        (0..self.open_loop.len()).all(|i| {
            self.estimate_feedback[i] < self.measurement_feedback[i]
                && self.measurement_feedback[i] < self.open_loop[i]
        })
    }

    /// Plain-text comparison table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("mode                   ");
        for i in 0..self.open_loop.len() {
            out.push_str(&format!("  t_OOB{} [min]", i + 1));
        }
        out.push('\n');
        for (name, row) in [
            ("open loop", &self.open_loop),
            ("measurement feedback", &self.measurement_feedback),
            ("estimate feedback", &self.estimate_feedback),
        ] {
            out.push_str(&format!("{name:<23}"));
            for v in row.iter() {
                out.push_str(&format!("  {v:>12.2}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<23}", "ratio meas/est"));
        for r in self.ratios() {
            out.push_str(&format!("  {r:>12.2}"));
        }
        out.push('\n');
        out
    }
}

/// The three scenario variants of Table 1 derived from `base`.
pub fn table1_configs(base: &ScenarioConfig) -> [ScenarioConfig; 3] {
    let open = ScenarioConfig {
        mode: LoopMode::OpenLoop,
        ..base.clone()
    };
    let meas = ScenarioConfig {
        mode: LoopMode::ClosedLoop,
        feedback_source: FeedbackSource::Measurement,
        ..base.clone()
    };
    let est = ScenarioConfig {
        mode: LoopMode::ClosedLoop,
        feedback_source: FeedbackSource::Estimate,
        ..base.clone()
    };
    [open, meas, est]
}

/// Runs open loop, measurement feedback and estimate feedback concurrently.
/// `controllers_for` supplies the cascade tuned for each feedback source.
pub fn run_table1(
    base: &ScenarioConfig,
    pp: &PlantParams,
    controllers_for: impl Fn(FeedbackSource) -> CascadeConfig + Sync,
    noise: &NoiseConfig,
) -> Result<(Table1, [RunResult; 3])> {
    let cfgs = table1_configs(base);
    let results: Vec<Result<RunResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|cfg| {
                let ctl = controllers_for(cfg.feedback_source);
                scope.spawn(move || run(cfg, pp, &ctl, noise))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::domain("scenario thread panicked"))))
            .collect()
    });
    let mut it = results.into_iter();
    let open = it.next().expect("three runs")?;
    let meas = it.next().expect("three runs")?;
    let est = it.next().expect("three runs")?;
    let table = table1_report(&open, &meas, &est);
    Ok((table, [open, meas, est]))
}

pub fn table1_report(open: &RunResult, meas: &RunResult, est: &RunResult) -> Table1 {
    Table1 {
        open_loop: open.t_oob_per_event.clone(),
        measurement_feedback: meas.t_oob_per_event.clone(),
        estimate_feedback: est.t_oob_per_event.clone(),
    }
}
