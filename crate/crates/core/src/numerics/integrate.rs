//! Adaptive and fixed-step integrators for autonomous or time-dependent ODEs.
//!
//! The default method is a linearly implicit Rosenbrock 2(3) pair
//! (Shampine–Reichelt, as in MATLAB's `ode23s`). It is L-stable, which the
//! plant needs: the pipe pressures equilibrate on a ~1e-9 s time scale while
//! the separator composition moves over minutes.

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::error::{Error, Result};

/// Right-hand side `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Jacobian `∂f/∂y`; defaults to forward differences around `f0 = f(t, y)`.
    fn jacobian(&self, t: f64, y: &[f64], f0: &[f64], jac: &mut Matrix) -> Result<()> {
        let n = self.dim();
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let delta = f64::EPSILON.sqrt() * y[j].abs().max(1e-5);
            yp[j] = y[j] + delta;
            self.rhs(t, &yp, &mut fp)?;
            yp[j] = y[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f0[i]) / delta;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// L-stable linearly implicit embedded pair, orders 2(3).
    Rosenbrock23,
    /// Explicit Dormand–Prince embedded pair, orders 5(4).
    DormandPrince45,
    /// Classic fourth-order Runge–Kutta with step `max_step`.
    FixedRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Largest step the adaptive methods may take, s. Step size of `FixedRk4`.
    pub max_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            max_step: 0.1,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            method: Method::Rosenbrock23,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0 && self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::domain("integrator tolerances and max_step must be > 0"));
        }
        Ok(())
    }
}

/// States sampled on a uniform output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Stepper that remembers its last accepted step size between calls, so a
/// long run advanced tick by tick does not restart step selection each time.
#[derive(Debug, Clone)]
pub struct Integrator {
    cfg: IntegratorConfig,
    step_hint: Option<f64>,
    accepted: u64,
    rejected: u64,
}

impl Integrator {
    pub fn new(cfg: IntegratorConfig) -> Self {
        Self {
            cfg,
            step_hint: None,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    /// `(accepted, rejected)` step counts so far.
    pub fn stats(&self) -> (u64, u64) {
        (self.accepted, self.rejected)
    }

    /// Advances `y` in place from `t0` to `t1`.
    pub fn advance<S: OdeSystem + ?Sized>(&mut self, sys: &S, y: &mut [f64], t0: f64, t1: f64) -> Result<()> {
        if !(t1 > t0) {
            return Err(Error::domain(format!("integration interval [{t0}, {t1}] is empty")));
        }
        match self.cfg.method {
            Method::Rosenbrock23 => self.adaptive(sys, y, t0, t1, rosenbrock23_step),
            Method::DormandPrince45 => self.adaptive(sys, y, t0, t1, dopri5_step),
            Method::FixedRk4 => fixed_rk4(sys, y, t0, t1, self.cfg.max_step),
        }
    }

    fn adaptive<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        y: &mut [f64],
        t0: f64,
        t1: f64,
        step: StepFn<S>,
    ) -> Result<()> {
        let span = t1 - t0;
        let mut t = t0;
        let mut h = self.step_hint.unwrap_or(span).min(self.cfg.max_step).min(span);
        let mut ynew = vec![0.0; y.len()];
        while t < t1 {
            let remaining = t1 - t;
            if remaining <= 1e-12 * t1.abs().max(1.0) {
                break;
            }
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            let hmin = 16.0 * f64::EPSILON * t.abs().max(1.0);
            if h_try < hmin {
                return Err(Error::Stiffness { t, h: h_try });
            }
            match step(sys, t, y, h_try, &self.cfg, &mut ynew) {
                Ok((err, order)) if err <= 1.0 => {
                    t = if last { t1 } else { t + h_try };
                    y.copy_from_slice(&ynew);
                    self.accepted += 1;
                    let fac = if err == 0.0 { 5.0 } else { (0.8 * err.powf(-1.0 / order)).clamp(0.2, 5.0) };
                    let grown = (h_try * fac).min(self.cfg.max_step);
                    // A short final step to hit t1 should not shrink the hint.
                    h = if last { grown.max(h.min(self.cfg.max_step)) } else { grown };
                }
                Ok((err, order)) => {
                    self.rejected += 1;
                    h = h_try * (0.8 * err.powf(-1.0 / order)).clamp(0.1, 0.9);
                }
                Err(Error::Domain(_)) => {
                    // Trial stage left the admissible region.
                    self.rejected += 1;
                    h = h_try * 0.25;
                }
                Err(e) => return Err(e),
            }
        }
        self.step_hint = Some(h);
        Ok(())
    }
}

/// Takes one trial step; returns the scaled error norm and the exponent
/// order used for step control.
type StepFn<S> = fn(&S, f64, &[f64], f64, &IntegratorConfig, &mut [f64]) -> Result<(f64, f64)>;

fn error_norm(err: &[f64], y: &[f64], ynew: &[f64], cfg: &IntegratorConfig) -> f64 {
    err.iter()
        .zip(y.iter().zip(ynew))
        .map(|(e, (a, b))| e.abs() / (cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

fn rosenbrock23_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    cfg: &IntegratorConfig,
    ynew: &mut [f64],
) -> Result<(f64, f64)> {
    let n = y.len();
    let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
    let e32 = 6.0 + std::f64::consts::SQRT_2;

    let mut f0 = vec![0.0; n];
    sys.rhs(t, y, &mut f0)?;
    let mut jac = Matrix::zeros(n, n);
    sys.jacobian(t, y, &f0, &mut jac)?;
    let mut w = Matrix::identity(n, n);
    w -= jac * (h * d);
    let lu = w.lu();
    let solve = |v: Vec<f64>| -> Result<Vec<f64>> {
        let b = Matrix::from_vec(n, 1, v);
        lu.solve(&b)
            .map(|x| x.as_slice().to_vec())
            .ok_or(Error::Singular { condition: f64::INFINITY })
    };

    let k1 = solve(f0.clone())?;
    let y1: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + 0.5 * h, &y1, &mut f1)?;
    let k2: Vec<f64> = solve((0..n).map(|i| f1[i] - k1[i]).collect())?
        .iter()
        .zip(&k1)
        .map(|(a, b)| a + b)
        .collect();
    for i in 0..n {
        ynew[i] = y[i] + h * k2[i];
    }
    let mut f2 = vec![0.0; n];
    sys.rhs(t + h, ynew, &mut f2)?;
    let k3 = solve(
        (0..n)
            .map(|i| f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]))
            .collect(),
    )?;
    let err: Vec<f64> = (0..n).map(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i])).collect();
    Ok((error_norm(&err, y, ynew, cfg), 3.0))
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dopri5_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    cfg: &IntegratorConfig,
    ynew: &mut [f64],
) -> Result<(f64, f64)> {
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    sys.rhs(t, y, &mut k[0])?;
    for s in 1..7 {
        for i in 0..n {
            stage[i] = y[i] + h * (0..s).map(|j| DP_A[s][j] * k[j][i]).sum::<f64>();
        }
        let (head, tail) = k.split_at_mut(s);
        let _ = head;
        sys.rhs(t + DP_C[s] * h, &stage, &mut tail[0])?;
    }
    // Stage 7 is evaluated at the 5th-order solution.
    ynew.copy_from_slice(&stage);
    let err: Vec<f64> = (0..n)
        .map(|i| h * (0..7).map(|s| DP_E[s] * k[s][i]).sum::<f64>())
        .collect();
    Ok((error_norm(&err, y, ynew, cfg), 5.0))
}

fn fixed_rk4<S: OdeSystem + ?Sized>(sys: &S, y: &mut [f64], t0: f64, t1: f64, h_max: f64) -> Result<()> {
    let n = y.len();
    let steps = ((t1 - t0) / h_max - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        sys.rhs(t, y, &mut k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.rhs(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(())
}

/// Integrates from `t0` to `t1` and returns the states on the grid
/// `t0, t0 + output_dt, …, t1`.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    output_dt: f64,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t1 > t0) || !(output_dt > 0.0) {
        return Err(Error::domain("integrate needs t1 > t0 and output_dt > 0"));
    }
    if y0.len() != sys.dim() {
        return Err(Error::domain("initial state has the wrong dimension"));
    }
    let intervals = ((t1 - t0) / output_dt).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(intervals + 1);
    let mut states = Vec::with_capacity(intervals + 1);
    let mut y = y0.to_vec();
    times.push(t0);
    states.push(y.clone());
    let mut stepper = Integrator::new(*cfg);
    for k in 1..=intervals {
        let ta = t0 + (k - 1) as f64 * output_dt;
        let tb = if k == intervals { t1 } else { t0 + k as f64 * output_dt };
        stepper.advance(sys, &mut y, ta, tb).map_err(|e| e.at(ta))?;
        times.push(tb);
        states.push(y.clone());
    }
    Ok(Trajectory { times, states })
}

/// Integrates from `t0` to `t1` and returns only the final state.
pub fn integrate_to<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut y = y0.to_vec();
    Integrator::new(*cfg).advance(sys, &mut y, t0, t1)?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -y[0];
            Ok(())
        }
    }

    struct Still;
    impl OdeSystem for Still {
        fn dim(&self) -> usize {
            3
        }
        fn rhs(&self, _t: f64, _y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy.fill(0.0);
            Ok(())
        }
    }

    /// Fast mode slaved to a slow one: y0' = -1e9 (y0 - y1), y1' = -y1.
    struct StiffPair;
    impl OdeSystem for StiffPair {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -1e9 * (y[0] - y[1]);
            dy[1] = -y[1];
            Ok(())
        }
    }

    fn methods() -> [IntegratorConfig; 3] {
        let base = IntegratorConfig::default();
        [
            base,
            IntegratorConfig { method: Method::DormandPrince45, ..base },
            IntegratorConfig { method: Method::FixedRk4, max_step: 0.01, ..base },
        ]
    }

    #[test]
    fn zero_rhs_is_constant() {
        for cfg in methods() {
            let traj = integrate(&Still, &[1.0, -2.0, 3.5], 0.0, 2.0, &cfg, 0.1).unwrap();
            assert_eq!(traj.times.len(), 21);
            assert!(traj.states.iter().all(|s| s == &vec![1.0, -2.0, 3.5]));
        }
    }

    #[test]
    fn exponential_decay_within_rel_tol() {
        let exact = (-1.0f64).exp();
        for cfg in methods() {
            let y = integrate_to(&Decay, &[1.0], 0.0, 1.0, &cfg).unwrap();
            // The Rosenbrock pair propagates its second-order solution, so its
            // global error is the accumulated local tolerance.
            let allowed = match cfg.method {
                Method::Rosenbrock23 => 100.0 * cfg.rel_tol,
                _ => cfg.rel_tol,
            };
            assert!(((y[0] - exact) / exact).abs() < allowed, "{:?}: {}", cfg.method, y[0]);
        }
    }

    #[test]
    fn rosenbrock_handles_extreme_stiffness() {
        let cfg = IntegratorConfig { max_step: 0.5, ..IntegratorConfig::default() };
        let mut stepper = Integrator::new(cfg);
        let mut y = vec![2.0, 1.0];
        stepper.advance(&StiffPair, &mut y, 0.0, 3.0).unwrap();
        let slow = (-3.0f64).exp();
        assert!((y[1] - slow).abs() < 1e-4 * slow, "{}", y[1]);
        assert!((y[0] - y[1]).abs() < 1e-6);
        let (accepted, _) = stepper.stats();
        assert!(accepted < 2000, "{accepted} steps");
    }

    #[test]
    fn deterministic() {
        let cfg = IntegratorConfig::default();
        let a = integrate(&StiffPair, &[2.0, 1.0], 0.0, 1.0, &cfg, 0.1).unwrap();
        let b = integrate(&StiffPair, &[2.0, 1.0], 0.0, 1.0, &cfg, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_interval() {
        assert!(integrate(&Decay, &[1.0], 1.0, 1.0, &IntegratorConfig::default(), 0.1).is_err());
    }
}
