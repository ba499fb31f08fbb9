//! `hto-sim` command line: `simulate`, `replay`, `tune`, `table1`.
//!
//! Exit codes: 0 success, 1 invalid invocation or configuration, 2 failure
//! during a run.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use super::config::{parse_config, Config, ControllersDoc};
use super::manifest::RunManifest;
use super::{plot, timeseries, write_atomic};
use crate::control::FeedbackSource;
use crate::error::{Error, Result};
use crate::estimator;
use crate::scenario::{self, calibrate_disturbances, reference_disturbance_sequence, RunResult, ScenarioConfig};
use crate::tuning::{self, ControllerSet, TuningReport};

#[derive(Debug, Parser)]
#[command(name = "hto-sim", version, about = "Anode gas purity simulation with EKF-based cascade control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON configuration; defaults reproduce the reference scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the noise seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its CSV log, figure and manifest.
    Simulate(Common),
    /// Re-run the estimator over a recorded CSV log.
    Replay {
        /// CSV written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Identify the loops, print the tuning report and write the controllers.
    Tune(Common),
    /// Run open loop, measurement feedback and estimate feedback and print
    /// the time-out-of-bound comparison.
    Table1(Common),
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            parse_config(&text).map_err(|e| match e {
                Error::Config { path: key, message } => Error::Config {
                    path: key,
                    message: format!("{message} (in {})", p.display()),
                },
                other => other,
            })?
        }
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    Ok(cfg)
}

/// Scenario with its disturbance events resolved, and the controllers for
/// both feedback sources.
pub struct Prepared {
    pub scenario: ScenarioConfig,
    pub controllers: ControllerSet,
    pub tuning: Option<TuningReport>,
    pub calibration: Option<scenario::Calibration>,
}

/// Calibrates the disturbances and tunes the controllers where the
/// configuration leaves them open.
pub fn prepare(cfg: &Config) -> Result<Prepared> {
    let mut scenario = cfg.scenario.clone();
    let calibration = match cfg.calibration_target {
        Some(target) => {
            let c = calibrate_disturbances(&cfg.plant, &scenario.nominal, target)?;
            scenario.events = reference_disturbance_sequence(&c);
            scenario.validate()?;
            Some(c)
        }
        None => None,
    };
    let (controllers, report) = match &cfg.controllers {
        Some(c) => (c.clone(), None),
        None => {
            let (r, c) = tuning::tune(&cfg.scenario, &cfg.plant, &cfg.noise, &cfg.tuning)?;
            (c, Some(r))
        }
    };
    Ok(Prepared {
        scenario,
        controllers,
        tuning: report,
        calibration,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn csv_bytes(result: &RunResult) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    timeseries::write_records(&result.records, &mut buf)?;
    Ok(buf)
}

/// Writes `<stem>.csv` and `<stem>.svg` and registers both in the manifest.
fn write_run(dir: &Path, stem: &str, result: &RunResult, alarm_limit: f64, manifest: &mut RunManifest) -> Result<()> {
    let csv = csv_bytes(result)?;
    write_atomic(&dir.join(format!("{stem}.csv")), &csv)?;
    manifest.add_output(&format!("{stem}.csv"), &csv);
    let svg = plot::render_svg(&result.records, alarm_limit)?;
    write_atomic(&dir.join(format!("{stem}.svg")), svg.as_bytes())?;
    manifest.add_output(&format!("{stem}.svg"), svg.as_bytes());
    Ok(())
}

fn simulate(c: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(c.config.as_deref(), c.seed)?;
    let start = Instant::now();
    let prep = prepare(&cfg)?;
    let ctl = prep.controllers.for_source(prep.scenario.feedback_source);
    let result = scenario::run(&prep.scenario, &cfg.plant, &ctl, &cfg.noise)?;
    create_dir(&c.out)?;
    let mut manifest = RunManifest::new(&cfg, start.elapsed());
    write_run(&c.out, "run", &result, prep.scenario.alarm_limit, &mut manifest)?;
    manifest.wall_clock_s = start.elapsed().as_secs_f64();
    manifest.write(&c.out.join("manifest.json"))?;
    let _ = writeln!(out, "mode {:?}, feedback {:?}", prep.scenario.mode, prep.scenario.feedback_source);
    for (i, t) in result.t_oob_per_event.iter().enumerate() {
        let _ = writeln!(out, "t_OOB{} = {t:.2} min", i + 1);
    }
    let _ = writeln!(
        out,
        "peak HTO pipe {:.5}, separator {:.5}",
        result.summary.peak_hto_pipe, result.summary.peak_hto_separator
    );
    let _ = writeln!(out, "wrote {}", c.out.display());
    Ok(())
}

fn replay(input: &Path, c: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(c.config.as_deref(), c.seed)?;
    let records = timeseries::read_csv(input)?;
    if records.len() < 2 {
        return Err(Error::config("input", "the log needs at least two rows"));
    }
    let dt = records[1].t - records[0].t;
    let mut sc = cfg.scenario.clone();
    sc.sample_period = dt;
    let model = scenario::estimator_model(&sc, &cfg.plant);
    let initial = scenario::estimator_initial_state(&sc, &cfg.plant)?;
    let rows = estimator::replay(&model, &cfg.noise, initial, &timeseries::replay_samples(&records))?;
    create_dir(&c.out)?;
    timeseries::write_estimates(&rows, &c.out.join("replay.csv"))?;
    let max_diff = rows
        .iter()
        .zip(&records)
        .map(|((_, h), r)| (h - r.hto_hat).abs())
        .fold(0.0, f64::max);
    let _ = writeln!(out, "replayed {} samples, max |diff| vs logged estimate = {max_diff:.3e}", rows.len());
    Ok(())
}

fn tune(c: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(c.config.as_deref(), c.seed)?;
    let (report, set) = tuning::tune(&cfg.scenario, &cfg.plant, &cfg.noise, &cfg.tuning)?;
    let _ = write!(out, "{}", report.render());
    let mut with = cfg.clone();
    with.controllers = Some(set);
    let doc: Option<ControllersDoc> = with.to_document().control.controllers;
    create_dir(&c.out)?;
    let text = serde_json::to_string_pretty(&doc).expect("controllers serialize");
    write_atomic(&c.out.join("controllers.json"), text.as_bytes())?;
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&c.out.join("tuning.json"), report_json.as_bytes())?;
    Ok(())
}

fn table1(c: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(c.config.as_deref(), c.seed)?;
    let start = Instant::now();
    let prep = prepare(&cfg)?;
    let (table, runs) = scenario::run_table1(&prep.scenario, &cfg.plant, |s: FeedbackSource| prep.controllers.for_source(s), &cfg.noise)?;
    create_dir(&c.out)?;
    let mut manifest = RunManifest::new(&cfg, start.elapsed());
    for (stem, r) in ["open_loop", "measurement_feedback", "estimate_feedback"].iter().zip(&runs) {
        write_run(&c.out, stem, r, prep.scenario.alarm_limit, &mut manifest)?;
    }
    let text = table.render();
    write_atomic(&c.out.join("table1.txt"), text.as_bytes())?;
    manifest.add_output("table1.txt", text.as_bytes());
    manifest.wall_clock_s = start.elapsed().as_secs_f64();
    manifest.write(&c.out.join("manifest.json"))?;
    let _ = write!(out, "{text}");
    let _ = writeln!(
        out,
        "ordering estimate < measurement < open loop: {}",
        if table.ordering_holds() { "holds" } else { "violated" }
    );
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c, out),
        Command::Replay { input, common } => replay(input, common, out),
        Command::Tune(c) => tune(c, out),
        Command::Table1(c) => table1(c, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
