//! Open-loop run of the reference sequence: the EKF estimate of the pipe HTO
//! against the truth and the lagging separator measurement.

use hto_sim::estimator::{observability_rank, EstimatorInputs};
use hto_sim::io::cli::prepare;
use hto_sim::io::Config;
use hto_sim::scenario::{self, LoopMode, ScenarioConfig};

fn main() -> hto_sim::Result<()> {
    let cfg = Config::default();
    let prep = prepare(&cfg)?;
    let sc = ScenarioConfig {
        mode: LoopMode::OpenLoop,
        ..prep.scenario.clone()
    };
    let ctl = prep.controllers.for_source(sc.feedback_source);
    let run = scenario::run(&sc, &cfg.plant, &ctl, &cfg.noise)?;
    println!("  t [min]   HTO_n    est.   HTO_n+1");
    for r in run.records.iter().step_by(3000) {
        println!(
            "{:>8.1} {:>7.4} {:>7.4} {:>8.4}",
            r.t / 60.0,
            r.pipe_hto(),
            r.hto_hat,
            r.separator_hto()
        );
    }
    let model = scenario::estimator_model(&sc, &cfg.plant);
    let last = run.records.last().expect("records");
    let x = [last.y.p_bar, last.y.level, last.y.x_h2, last.y.x_o2, last.n_h2_hat, last.n_o2_hat];
    let u = EstimatorInputs {
        n_out_gas: last.n_out_gas,
        m_lye: last.m_lye,
    };
    println!("observability rank at the end: {}", observability_rank(&x, &u, &model)?);
    Ok(())
}
