//! JSON configuration document. Keys carry their unit as a suffix; the
//! document maps onto the internal structs, which use SI units except where
//! the suffix says `_bar`.

use serde::{Deserialize, Serialize};

use crate::control::{CascadeConfig, FeedbackSource, PiController};
use crate::error::{Error, Result};
use crate::estimator::{NoiseConfig, N_MEAS, N_STATES};
use crate::numerics::{IntegratorConfig, Method};
use crate::plant::{PlantParams, SpeciesParams};
use crate::scenario::{DisturbanceChannel, DisturbanceEvent, LoopMode, OperatingPoint, ScenarioConfig};
use crate::tuning::{ControllerSet, TuningSettings};

pub const SCHEMA_VERSION: u32 = 1;

/// Default separator-HTO target of the disturbance calibration.
pub const DEFAULT_CALIBRATION_TARGET: f64 = 0.025;

/// Everything a run needs, in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// `events` is empty when the disturbances are calibrated.
    pub scenario: ScenarioConfig,
    pub plant: PlantParams,
    pub noise: NoiseConfig,
    /// Separator-HTO target of the calibrated disturbances; `None` when the
    /// events are given explicitly.
    pub calibration_target: Option<f64>,
    pub tuning: TuningSettings,
    /// Fixed controllers; `None` tunes them by step tests before the run.
    pub controllers: Option<ControllerSet>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            plant: PlantParams::default(),
            noise: NoiseConfig::default(),
            calibration_target: Some(DEFAULT_CALIBRATION_TARGET),
            tuning: TuningSettings::default(),
            controllers: None,
        }
    }
}

// ---- document types -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDocument {
    pub schema_version: u32,
    pub scenario: ScenarioDoc,
    pub plant: PlantDoc,
    pub estimator: EstimatorDoc,
    pub control: ControlDoc,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        Config::default().to_document()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioDoc {
    pub duration_s: f64,
    pub sample_period_s: f64,
    pub mode: LoopMode,
    pub feedback_source: FeedbackSource,
    pub open_loop_p_sp_bar: f64,
    pub seed: u64,
    pub alarm_limit_frac: f64,
    pub noise: MeasurementNoiseDoc,
    pub nominal: NominalDoc,
    pub disturbances: DisturbancesDoc,
    pub integrator: IntegratorDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementNoiseDoc {
    /// `null` adds noise only to closed-loop runs with estimate feedback.
    pub enabled: Option<bool>,
    pub p_std_bar: f64,
    pub level_std_m: f64,
    pub x_h2_std_frac: f64,
    pub x_o2_std_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NominalDoc {
    pub current_density_a_per_m2: f64,
    pub dp_bar: f64,
    pub m_in_kg_per_s: f64,
    pub p_bar: f64,
    pub level_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum DisturbancesDoc {
    /// Current-density drop at 30–60 min and pressure-difference rise at
    /// 90–120 min, sized so that each drives the open-loop separator HTO to
    /// `target_hto_frac`.
    Calibrated { target_hto_frac: f64 },
    Explicit { events: Vec<EventDoc> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDoc {
    pub t_start_s: f64,
    pub t_end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_density_a_per_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorDoc {
    pub method: Method,
    pub max_step_s: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantDoc {
    pub electrode_area_m2: f64,
    pub membrane_thickness_m: f64,
    pub temperature_k: f64,
    pub n_segments: usize,
    pub pipe_length_m: f64,
    pub pipe_radius_m: f64,
    pub viscosity_pa_s: f64,
    pub separator_volume_m3: f64,
    pub separator_area_m2: f64,
    pub lye_density_kg_per_m3: f64,
    pub faraday_c_per_mol: f64,
    pub gas_constant_j_per_mol_k: f64,
    pub h2: SpeciesDoc,
    pub o2: SpeciesDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesDoc {
    pub diffusivity_m2_per_s: f64,
    pub solubility_mol_per_kg_bar: f64,
}

/// Filter covariances in filter units: `[p bar, l m, x_H2, x_O2, n_H2 mol/s,
/// n_O2 mol/s]` for Q and `[p bar, l m, x_H2, x_O2]` for R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorDoc {
    pub q_diag: [f64; N_STATES],
    pub r_diag: [f64; N_MEAS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlDoc {
    pub hto_sp_frac: f64,
    pub p_sp_min_bar: f64,
    pub p_sp_max_bar: f64,
    pub tuning: TuningDoc,
    /// Fixed controllers for both feedback sources; omitted to tune them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controllers: Option<ControllersDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningDoc {
    pub pc_step_frac: f64,
    pub pc_filter_tau_s: f64,
    pub pc_setpoint_weight: f64,
    pub pc_out_max_factor: f64,
    pub lc_step_frac: f64,
    pub lc_tau_c_s: f64,
    pub cc_step_bar: f64,
    pub outer_to_inner_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllersDoc {
    pub measurement: CascadeDoc,
    pub estimate: CascadeDoc,
}

/// Setpoints are not listed: CC uses `hto_sp_frac`, PC the nominal pressure
/// and LC the nominal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeDoc {
    /// Output bar, input HTO fraction.
    pub cc: PiDoc,
    /// Output mol/s, input bar.
    pub pc: PiDoc,
    /// Output kg/s, input m.
    pub lc: PiDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiDoc {
    pub kc: f64,
    pub tau_i_s: f64,
    pub direction: f64,
    pub bias: f64,
    pub out_min: f64,
    pub out_max: f64,
    #[serde(default = "one")]
    pub setpoint_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pv_filter_tau_s: Option<f64>,
}

fn one() -> f64 {
    1.0
}

macro_rules! default_from_config {
    ($($t:ty => |$d:ident| $e:expr;)*) => {$(
        impl Default for $t {
            fn default() -> Self {
                let $d = ConfigDocument::default();
                $e
            }
        }
    )*};
}

default_from_config! {
    ScenarioDoc => |d| d.scenario;
    MeasurementNoiseDoc => |d| d.scenario.noise;
    NominalDoc => |d| d.scenario.nominal;
    IntegratorDoc => |d| d.scenario.integrator;
    PlantDoc => |d| d.plant;
    EstimatorDoc => |d| d.estimator;
    ControlDoc => |d| d.control;
    TuningDoc => |d| d.control.tuning;
}

impl Default for DisturbancesDoc {
    fn default() -> Self {
        DisturbancesDoc::Calibrated {
            target_hto_frac: DEFAULT_CALIBRATION_TARGET,
        }
    }
}

// ---- conversions ----------------------------------------------------------

fn pi_doc(c: &PiController) -> PiDoc {
    PiDoc {
        kc: c.kc,
        tau_i_s: c.tau_i,
        direction: c.direction,
        bias: c.bias,
        out_min: c.out_min,
        out_max: c.out_max,
        setpoint_weight: c.setpoint_weight,
        pv_filter_tau_s: c.pv_filter_tau,
    }
}

fn pi_from_doc(d: &PiDoc, setpoint: f64, path: &str) -> Result<PiController> {
    let mut c = PiController::new(d.kc, d.tau_i_s, d.out_min, d.out_max).map_err(|e| in_section(path, e))?;
    c.direction = d.direction;
    c.bias = d.bias;
    c.setpoint = setpoint;
    c.setpoint_weight = d.setpoint_weight;
    c.pv_filter_tau = d.pv_filter_tau_s;
    c.validate().map_err(|e| in_section(path, e))?;
    Ok(c)
}

fn in_section(path: &str, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::config(path, m),
        other => other,
    }
}

impl Config {
    pub fn to_document(&self) -> ConfigDocument {
        let s = &self.scenario;
        let disturbances = match self.calibration_target {
            Some(target) => DisturbancesDoc::Calibrated { target_hto_frac: target },
            None => DisturbancesDoc::Explicit {
                events: s
                    .events
                    .iter()
                    .map(|e| EventDoc {
                        t_start_s: e.t_start,
                        t_end_s: e.t_end,
                        current_density_a_per_m2: (e.channel == DisturbanceChannel::CurrentDensity).then_some(e.value),
                        dp_bar: (e.channel == DisturbanceChannel::PressureDifference).then_some(e.value),
                    })
                    .collect(),
            },
        };
        let p = &self.plant;
        let species = |sp: &SpeciesParams| SpeciesDoc {
            diffusivity_m2_per_s: sp.diffusivity,
            solubility_mol_per_kg_bar: sp.solubility,
        };
        let t = &self.tuning;
        let mut q_diag = [0.0; N_STATES];
        let mut r_diag = [0.0; N_MEAS];
        for (i, v) in q_diag.iter_mut().enumerate() {
            *v = self.noise.q[(i, i)];
        }
        for (i, v) in r_diag.iter_mut().enumerate() {
            *v = self.noise.r[(i, i)];
        }
        let cascade = |c: &CascadeConfig| CascadeDoc {
            cc: pi_doc(&c.cc),
            pc: pi_doc(&c.pc),
            lc: pi_doc(&c.lc),
        };
        ConfigDocument {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioDoc {
                duration_s: s.duration,
                sample_period_s: s.sample_period,
                mode: s.mode,
                feedback_source: s.feedback_source,
                open_loop_p_sp_bar: s.open_loop_p_sp,
                seed: s.seed,
                alarm_limit_frac: s.alarm_limit,
                noise: MeasurementNoiseDoc {
                    enabled: s.noise_enabled,
                    p_std_bar: s.meas_noise_std[0],
                    level_std_m: s.meas_noise_std[1],
                    x_h2_std_frac: s.meas_noise_std[2],
                    x_o2_std_frac: s.meas_noise_std[3],
                },
                nominal: NominalDoc {
                    current_density_a_per_m2: s.nominal.current_density,
                    dp_bar: s.nominal.dp,
                    m_in_kg_per_s: s.nominal.m_in,
                    p_bar: s.nominal.p_bar,
                    level_m: s.nominal.level,
                },
                disturbances,
                integrator: IntegratorDoc {
                    method: s.integrator.method,
                    max_step_s: s.integrator.max_step,
                    rel_tol: s.integrator.rel_tol,
                    abs_tol: s.integrator.abs_tol,
                },
            },
            plant: PlantDoc {
                electrode_area_m2: p.electrode_area,
                membrane_thickness_m: p.membrane_thickness,
                temperature_k: p.temperature,
                n_segments: p.n_segments,
                pipe_length_m: p.pipe_length,
                pipe_radius_m: p.pipe_radius,
                viscosity_pa_s: p.viscosity,
                separator_volume_m3: p.separator_volume,
                separator_area_m2: p.separator_area,
                lye_density_kg_per_m3: p.lye_density,
                faraday_c_per_mol: p.faraday,
                gas_constant_j_per_mol_k: p.gas_constant,
                h2: species(&p.h2),
                o2: species(&p.o2),
            },
            estimator: EstimatorDoc { q_diag, r_diag },
            control: ControlDoc {
                hto_sp_frac: t.hto_sp,
                p_sp_min_bar: t.p_sp_min,
                p_sp_max_bar: t.p_sp_max,
                tuning: TuningDoc {
                    pc_step_frac: t.pc_step_fraction,
                    pc_filter_tau_s: t.pc_filter_tau,
                    pc_setpoint_weight: t.pc_setpoint_weight,
                    pc_out_max_factor: t.pc_out_max_factor,
                    lc_step_frac: t.lc_step_fraction,
                    lc_tau_c_s: t.lc_tau_c,
                    cc_step_bar: t.cc_step_bar,
                    outer_to_inner_ratio: t.outer_to_inner_ratio,
                },
                controllers: self.controllers.as_ref().map(|c| ControllersDoc {
                    measurement: cascade(&c.measurement),
                    estimate: cascade(&c.estimate),
                }),
            },
        }
    }

    /// Converts and validates a document; errors name the offending key.
    pub fn from_document(d: &ConfigDocument) -> Result<Self> {
        if d.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", d.schema_version),
            ));
        }
        let sd = &d.scenario;
        let (events, calibration_target) = match &sd.disturbances {
            DisturbancesDoc::Calibrated { target_hto_frac } => {
                if !(*target_hto_frac > 0.0 && *target_hto_frac < 1.0) {
                    return Err(Error::config(
                        "scenario.disturbances.target_hto_frac",
                        "must lie in (0, 1)",
                    ));
                }
                (Vec::new(), Some(*target_hto_frac))
            }
            DisturbancesDoc::Explicit { events } => {
                let mut out = Vec::with_capacity(events.len());
                for (i, e) in events.iter().enumerate() {
                    let (channel, value) = match (e.current_density_a_per_m2, e.dp_bar) {
                        (Some(v), None) => (DisturbanceChannel::CurrentDensity, v),
                        (None, Some(v)) => (DisturbanceChannel::PressureDifference, v),
                        _ => {
                            return Err(Error::config(
                                format!("scenario.disturbances.events[{i}]"),
                                "give exactly one of current_density_a_per_m2 and dp_bar",
                            ))
                        }
                    };
                    out.push(DisturbanceEvent {
                        t_start: e.t_start_s,
                        t_end: e.t_end_s,
                        channel,
                        value,
                    });
                }
                (out, None)
            }
        };
        let scenario = ScenarioConfig {
            duration: sd.duration_s,
            sample_period: sd.sample_period_s,
            events,
            mode: sd.mode,
            feedback_source: sd.feedback_source,
            open_loop_p_sp: sd.open_loop_p_sp_bar,
            meas_noise_std: [
                sd.noise.p_std_bar,
                sd.noise.level_std_m,
                sd.noise.x_h2_std_frac,
                sd.noise.x_o2_std_frac,
            ],
            noise_enabled: sd.noise.enabled,
            seed: sd.seed,
            nominal: OperatingPoint {
                current_density: sd.nominal.current_density_a_per_m2,
                dp: sd.nominal.dp_bar,
                m_in: sd.nominal.m_in_kg_per_s,
                p_bar: sd.nominal.p_bar,
                level: sd.nominal.level_m,
            },
            alarm_limit: sd.alarm_limit_frac,
            integrator: IntegratorConfig {
                max_step: sd.integrator.max_step_s,
                rel_tol: sd.integrator.rel_tol,
                abs_tol: sd.integrator.abs_tol,
                method: sd.integrator.method,
            },
        };
        scenario.validate().map_err(|e| in_section("scenario", e))?;

        let pd = &d.plant;
        if pd.n_segments == 0 {
            return Err(Error::config("plant.n_segments", "must be >= 1"));
        }
        let plant = PlantParams {
            electrode_area: pd.electrode_area_m2,
            membrane_thickness: pd.membrane_thickness_m,
            temperature: pd.temperature_k,
            n_segments: pd.n_segments,
            pipe_length: pd.pipe_length_m,
            pipe_radius: pd.pipe_radius_m,
            viscosity: pd.viscosity_pa_s,
            separator_volume: pd.separator_volume_m3,
            separator_area: pd.separator_area_m2,
            lye_density: pd.lye_density_kg_per_m3,
            faraday: pd.faraday_c_per_mol,
            gas_constant: pd.gas_constant_j_per_mol_k,
            h2: SpeciesParams {
                diffusivity: pd.h2.diffusivity_m2_per_s,
                solubility: pd.h2.solubility_mol_per_kg_bar,
                ..SpeciesParams::hydrogen()
            },
            o2: SpeciesParams {
                diffusivity: pd.o2.diffusivity_m2_per_s,
                solubility: pd.o2.solubility_mol_per_kg_bar,
                ..SpeciesParams::oxygen()
            },
        };
        plant.validate().map_err(|e| in_section("plant", e))?;
        let level_max = plant.separator_volume / plant.separator_area;
        if !(scenario.nominal.level > 0.0 && scenario.nominal.level < level_max) {
            return Err(Error::config(
                "scenario.nominal.level_m",
                format!("must lie in (0, {level_max}) for the given separator"),
            ));
        }

        let noise = NoiseConfig::diagonal(d.estimator.q_diag, d.estimator.r_diag);
        noise.validate().map_err(|e| in_section("estimator", e))?;

        let c = &d.control;
        let td = &c.tuning;
        let tuning = TuningSettings {
            pc_step_fraction: td.pc_step_frac,
            pc_filter_tau: td.pc_filter_tau_s,
            pc_setpoint_weight: td.pc_setpoint_weight,
            pc_out_max_factor: td.pc_out_max_factor,
            lc_step_fraction: td.lc_step_frac,
            lc_tau_c: td.lc_tau_c_s,
            cc_step_bar: td.cc_step_bar,
            outer_to_inner_ratio: td.outer_to_inner_ratio,
            hto_sp: c.hto_sp_frac,
            p_sp_min: c.p_sp_min_bar,
            p_sp_max: c.p_sp_max_bar,
        };
        let positive = [
            ("pc_step_frac", td.pc_step_frac),
            ("pc_filter_tau_s", td.pc_filter_tau_s),
            ("pc_out_max_factor", td.pc_out_max_factor),
            ("lc_step_frac", td.lc_step_frac),
            ("lc_tau_c_s", td.lc_tau_c_s),
            ("outer_to_inner_ratio", td.outer_to_inner_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("control.tuning.{name}"), "must be > 0"));
            }
        }
        if td.cc_step_bar == 0.0 || !td.cc_step_bar.is_finite() {
            return Err(Error::config("control.tuning.cc_step_bar", "must be nonzero"));
        }

        if !(c.hto_sp_frac > 0.0 && c.hto_sp_frac < scenario.alarm_limit) {
            return Err(Error::config("control.hto_sp_frac", "must lie between 0 and the alarm limit"));
        }
        if !(c.p_sp_min_bar > 0.0 && c.p_sp_min_bar < c.p_sp_max_bar) {
            return Err(Error::config("control.p_sp_min_bar", "must be > 0 and below p_sp_max_bar"));
        }

        let controllers = match &c.controllers {
            None => None,
            Some(cd) => {
                let build = |doc: &CascadeDoc, source: FeedbackSource, path: &str| -> Result<CascadeConfig> {
                    let cfg = CascadeConfig {
                        hto_sp: c.hto_sp_frac,
                        p_sp_min: c.p_sp_min_bar,
                        p_sp_max: c.p_sp_max_bar,
                        feedback_source: source,
                        cc: pi_from_doc(&doc.cc, c.hto_sp_frac, &format!("{path}.cc"))?,
                        pc: pi_from_doc(&doc.pc, scenario.nominal.p_bar, &format!("{path}.pc"))?,
                        lc: pi_from_doc(&doc.lc, scenario.nominal.level, &format!("{path}.lc"))?,
                    };
                    cfg.validate().map_err(|e| in_section(path, e))?;
                    Ok(cfg)
                };
                Some(ControllerSet {
                    measurement: build(&cd.measurement, FeedbackSource::Measurement, "control.controllers.measurement")?,
                    estimate: build(&cd.estimate, FeedbackSource::Estimate, "control.controllers.estimate")?,
                })
            }
        };
        Ok(Config {
            scenario,
            plant,
            noise,
            calibration_target,
            tuning,
            controllers,
        })
    }
}

/// Parses and validates a JSON configuration. Missing keys take their
/// defaults; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        Error::config(if path == "." { "<document>".to_string() } else { path }, message)
    })?;
    Config::from_document(&doc)
}

/// Pretty JSON of the full document, every key present.
pub fn serialize_config(cfg: &Config) -> String {
    serde_json::to_string_pretty(&cfg.to_document()).expect("configuration document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_scenario() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.scenario.duration, 9000.0);
        assert_eq!(cfg.calibration_target, Some(DEFAULT_CALIBRATION_TARGET));
    }

    #[test]
    fn zero_segments_names_the_field() {
        let err = parse_config(r#"{"plant": {"n_segments": 0}}"#).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("plant.n_segments"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let err = parse_config(r#"{"scenario": {"duration": 10}}"#).unwrap_err();
        assert!(err.is_validation());
        let msg = err.to_string();
        assert!(msg.contains("duration"), "{msg}");
        assert!(msg.contains("scenario"), "{msg}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_config("{\n  \"scenario\": {\n    \"duration_s\": ,\n  }\n}").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn wrong_schema_version() {
        let err = parse_config(r#"{"schema_version": 7}"#).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn explicit_events_round_trip() {
        let text = r#"{"scenario": {"duration_s": 600, "disturbances": {"kind": "explicit", "events": [
            {"t_start_s": 60, "t_end_s": 120, "current_density_a_per_m2": 500},
            {"t_start_s": 200, "t_end_s": 300, "dp_bar": 0.4}]}}}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.calibration_target, None);
        assert_eq!(cfg.scenario.events.len(), 2);
        assert_eq!(cfg.scenario.events[1].channel, DisturbanceChannel::PressureDifference);
        assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn event_needs_exactly_one_channel() {
        let text = r#"{"scenario": {"disturbances": {"kind": "explicit", "events": [
            {"t_start_s": 60, "t_end_s": 120}]}}}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("events[0]"), "{err}");
    }

    #[test]
    fn negative_duration_is_a_scenario_error() {
        let err = parse_config(r#"{"scenario": {"duration_s": -1}}"#).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("scenario"));
    }
}
