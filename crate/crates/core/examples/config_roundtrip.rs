//! Parses a partial JSON configuration and prints the full canonical
//! document with every default filled in.

use hto_sim::io::config::{parse_config, serialize_config};
use hto_sim::io::manifest::config_digest;

fn main() -> hto_sim::Result<()> {
    let text = r#"{
        "schema_version": 1,
        "scenario": { "seed": 42, "feedback_source": "measurement" },
        "control": { "tuning": { "lc_tau_c_s": 90 } }
    }"#;
    let cfg = parse_config(text)?;
    println!("{}", serialize_config(&cfg));
    println!("digest {}", config_digest(&cfg));
    match parse_config(r#"{"plant": {"n_segments": 0}}"#) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("zero segments is invalid"),
    }
    Ok(())
}
