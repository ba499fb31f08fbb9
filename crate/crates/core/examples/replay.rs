//! Records a short closed-loop run to CSV and re-runs the estimator over the
//! file alone.

use hto_sim::estimator::replay;
use hto_sim::io::cli::prepare;
use hto_sim::io::timeseries::{read_csv, replay_samples, write_csv};
use hto_sim::io::Config;
use hto_sim::scenario::{self, DisturbanceChannel, DisturbanceEvent};

fn main() -> hto_sim::Result<()> {
    let mut cfg = Config::default();
    cfg.calibration_target = None;
    cfg.scenario.duration = 600.0;
    cfg.scenario.events = vec![DisturbanceEvent {
        t_start: 60.0,
        t_end: 360.0,
        channel: DisturbanceChannel::PressureDifference,
        value: 0.3,
    }];
    let prep = prepare(&cfg)?;
    let ctl = prep.controllers.for_source(prep.scenario.feedback_source);
    let run = scenario::run(&prep.scenario, &cfg.plant, &ctl, &cfg.noise)?;

    let dir = tempfile::tempdir().map_err(|source| hto_sim::Error::Io {
        path: std::env::temp_dir(),
        source,
    })?;
    let path = dir.path().join("run.csv");
    write_csv(&run.records, &path)?;
    let records = read_csv(&path)?;
    let model = scenario::estimator_model(&prep.scenario, &cfg.plant);
    let initial = scenario::estimator_initial_state(&prep.scenario, &cfg.plant)?;
    let est = replay(&model, &cfg.noise, initial, &replay_samples(&records))?;
    let diff = est
        .iter()
        .zip(&run.records)
        .map(|((_, h), r)| (h - r.hto_hat).abs())
        .fold(0.0, f64::max);
    println!("{} rows replayed from {}, max |diff| = {diff:e}", est.len(), path.display());
    Ok(())
}
