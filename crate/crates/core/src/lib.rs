//! Simulation, estimation and control of hydrogen-to-oxygen crossover in an
//! alkaline electrolyzer stack with a gas separator.

pub mod control;
pub mod error;
pub mod estimator;
pub mod io;
pub mod numerics;
pub mod plant;
pub mod scenario;
pub mod tuning;

pub use error::{Error, Result};
