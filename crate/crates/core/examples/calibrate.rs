//! Sizes the two reference disturbances so each drives the open-loop
//! separator HTO to 2.5 %.

use hto_sim::plant::PlantParams;
use hto_sim::scenario::{calibrate_disturbances, reference_disturbance_sequence, OperatingPoint};

fn main() -> hto_sim::Result<()> {
    let pp = PlantParams::default();
    let c = calibrate_disturbances(&pp, &OperatingPoint::default(), 0.025)?;
    println!(
        "current density {:.1} A/m² -> separator HTO {:.4}",
        c.current_density_low, c.hto_at_current_low
    );
    println!("pressure difference {:.4} bar -> separator HTO {:.4}", c.dp_high, c.hto_at_dp_high);
    for e in reference_disturbance_sequence(&c) {
        println!("{:?} = {} over [{}, {}) s", e.channel, e.value, e.t_start, e.t_end);
    }
    Ok(())
}
