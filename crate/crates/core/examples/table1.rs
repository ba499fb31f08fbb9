//! Time out of bound for open loop, measurement feedback and estimate
//! feedback on the calibrated reference sequence.

use hto_sim::io::cli::prepare;
use hto_sim::io::Config;
use hto_sim::scenario::run_table1;

fn main() -> hto_sim::Result<()> {
    let cfg = Config::default();
    let prep = prepare(&cfg)?;
    let (table, runs) = run_table1(&prep.scenario, &cfg.plant, |s| prep.controllers.for_source(s), &cfg.noise)?;
    print!("{}", table.render());
    for (name, r) in ["open loop", "measurement", "estimate"].iter().zip(&runs) {
        println!(
            "{name:<12} peak HTO pipe {:.4}, separator {:.4}",
            r.summary.peak_hto_pipe, r.summary.peak_hto_separator
        );
    }
    Ok(())
}
