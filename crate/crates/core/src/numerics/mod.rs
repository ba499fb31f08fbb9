//! Time integration and the small dense linear algebra used by the estimator.

mod integrate;
mod linalg;

pub use integrate::{
    integrate, integrate_to, IntegratorConfig, Integrator, Method, OdeSystem, Trajectory,
};
pub use linalg::{condition_number, rank, solve_linear, symmetrize, Matrix, DEFAULT_RANK_TOL};
