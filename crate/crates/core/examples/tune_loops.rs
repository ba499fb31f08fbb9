//! Step-test identification and SIMC tuning of the pressure, level and
//! concentration loops, then a closed-loop check of the outer loop speed.

use hto_sim::control::FeedbackSource;
use hto_sim::io::Config;
use hto_sim::tuning::{outer_loop_step_test, tune};

fn main() -> hto_sim::Result<()> {
    let cfg = Config::default();
    let (report, set) = tune(&cfg.scenario, &cfg.plant, &cfg.noise, &cfg.tuning)?;
    print!("{}", report.render());
    for source in [FeedbackSource::Estimate, FeedbackSource::Measurement] {
        let (m, _) = outer_loop_step_test(&cfg.scenario, &cfg.plant, &cfg.noise, &set.for_source(source), 0.05)?;
        println!(
            "{source:?} feedback: outer 63% time {:.1} s = {:.1} x inner",
            m.tau + m.theta,
            (m.tau + m.theta) / report.inner_response_time()
        );
    }
    Ok(())
}
