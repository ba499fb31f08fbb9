//! Simulates the estimate-feedback run and writes the two-panel SVG figure.

use hto_sim::io::cli::prepare;
use hto_sim::io::{emit_plots, Config};
use hto_sim::scenario;

fn main() -> hto_sim::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "estimate_feedback.svg".into());
    let cfg = Config::default();
    let prep = prepare(&cfg)?;
    let ctl = prep.controllers.for_source(prep.scenario.feedback_source);
    let run = scenario::run(&prep.scenario, &cfg.plant, &ctl, &cfg.noise)?;
    emit_plots(&run.records, prep.scenario.alarm_limit, std::path::Path::new(&out))?;
    println!("wrote {out}");
    Ok(())
}
