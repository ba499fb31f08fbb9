//! The pipe pressures relax within nanoseconds, so explicit methods crawl
//! while the Rosenbrock method steps at the output interval.

use std::time::Instant;

use hto_sim::numerics::{integrate, IntegratorConfig, Method};
use hto_sim::plant::{PlantOde, PlantParams};
use hto_sim::scenario::OperatingPoint;

fn main() -> hto_sim::Result<()> {
    let pp = PlantParams::default();
    let (s, mut u) = OperatingPoint::default().steady_state(&pp)?;
    // Current-density drop from the steady state.
    u.current_density = 1000.0;
    let ode = PlantOde { params: &pp, inputs: u };
    for (method, horizon) in [(Method::Rosenbrock23, 60.0), (Method::DormandPrince45, 1e-3)] {
        let cfg = IntegratorConfig {
            method,
            ..IntegratorConfig::default()
        };
        let start = Instant::now();
        let traj = integrate(&ode, &s.to_vec(), 0.0, horizon, &cfg, horizon)?;
        println!(
            "{method:?}: {horizon} s simulated in {:.3} s wall, final separator p = {:.6} bar",
            start.elapsed().as_secs_f64(),
            traj.states.last().expect("final state")[s.separator()] / 1e5
        );
    }
    Ok(())
}
