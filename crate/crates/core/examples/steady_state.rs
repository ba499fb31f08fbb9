//! Nominal steady state of the gas train and its HTO profile.

use hto_sim::plant::PlantParams;
use hto_sim::scenario::OperatingPoint;

fn main() -> hto_sim::Result<()> {
    let pp = PlantParams::default();
    let op = OperatingPoint::default();
    let (s, u) = op.steady_state(&pp)?;
    println!("I = {} A/m², dp = {} bar, p = {} bar", op.current_density, op.dp, op.p_bar);
    println!("balancing gas outflow {:.5} mol/s, lye outflow {} kg/s", u.n_out_gas, u.m_lye);
    for (i, h) in s.hto_profile()?.iter().enumerate() {
        let name = if i == s.separator() { "separator".to_string() } else { format!("pipe {}", i + 1) };
        println!("{name:<10} p = {:.6} bar  HTO = {:.4} %", s.pressure_bar(i), 100.0 * h);
    }
    Ok(())
}
