//! Extended Kalman filter on a lumped separator model.
//!
//! The filter sees only the separator: pressure, level and gas composition.
//! Its two extra states are the unknown gas inflows from the pipe, modelled
//! as random walks, so the ratio `n̄_H2 / n̄_O2` estimates the upstream HTO
//! that no sensor measures directly.
//!
//! Filter units: pressure in bar, level in m, flows in mol/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, solve_linear, symmetrize, Matrix, OdeSystem, DEFAULT_RANK_TOL};
use crate::plant::{self, PlantInputs, PlantParams, PlantState, BAR, COMPOSITION_FLOOR};

pub const N_STATES: usize = 6;
pub const N_MEAS: usize = 4;
pub const N_INPUTS: usize = 2;

pub const IDX_P: usize = 0;
pub const IDX_L: usize = 1;
pub const IDX_XH2: usize = 2;
pub const IDX_XO2: usize = 3;
pub const IDX_NH2: usize = 4;
pub const IDX_NO2: usize = 5;

/// Separator-only model driven by augmented inflow states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedModel {
    pub params: PlantParams,
    /// Lye inflow to the separator, kg/s. Not measured by the filter, held at
    /// its nominal value.
    pub m_in: f64,
    /// Discretization step, s.
    pub t_s: f64,
}

/// Manipulated inputs seen by the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorInputs {
    /// Separator gas outflow, mol/s.
    pub n_out_gas: f64,
    /// Lye outflow, kg/s.
    pub m_lye: f64,
}

impl EstimatorInputs {
    pub fn from_plant(u: &PlantInputs) -> Self {
        Self {
            n_out_gas: u.n_out_gas,
            m_lye: u.m_lye,
        }
    }
}

/// Separator measurements `[p (bar), l (m), x_H2, x_O2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub p_bar: f64,
    pub level: f64,
    pub x_h2: f64,
    pub x_o2: f64,
}

impl Measurement {
    /// Noise-free separator measurement of a plant state.
    pub fn of_plant(s: &PlantState) -> Self {
        let sep = s.separator();
        Self {
            p_bar: s.pressure[sep] / BAR,
            level: s.level,
            x_h2: s.x_h2[sep],
            x_o2: s.x_o2[sep],
        }
    }

    pub fn as_array(&self) -> [f64; N_MEAS] {
        [self.p_bar, self.level, self.x_h2, self.x_o2]
    }

    pub fn from_array(y: [f64; N_MEAS]) -> Self {
        Self {
            p_bar: y[0],
            level: y[1],
            x_h2: y[2],
            x_o2: y[3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::domain("non-finite measurement"))
        }
    }
}

/// Process and measurement noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub q: Matrix,
    pub r: Matrix,
}

impl Default for NoiseConfig {
    /// `Q = diag(10, 1, 1e-4, 1e-4, 0.3, 300)`, `R = I₄`.
    fn default() -> Self {
        Self::diagonal([10.0, 1.0, 1e-4, 1e-4, 0.3, 300.0], [1.0; N_MEAS])
    }
}

impl NoiseConfig {
    pub fn diagonal(q: [f64; N_STATES], r: [f64; N_MEAS]) -> Self {
        Self {
            q: Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(&q)),
            r: Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(&r)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m, n) in [("Q", &self.q, N_STATES), ("R", &self.r, N_MEAS)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::domain(format!("{name} must be {n}x{n}")));
            }
            if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
                return Err(Error::domain(format!("{name} is not symmetric")));
            }
            let min_eig = m.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-12 * m.trace().abs().max(1.0) {
                return Err(Error::domain(format!("{name} is not positive semidefinite")));
            }
        }
        Ok(())
    }
}

/// Estimate `x̂ = [p, l, x_H2, x_O2, n̄_H2, n̄_O2]` with covariance `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x: [f64; N_STATES],
    pub p: Matrix,
}

impl EstimatorState {
    /// Smallest eigenvalue of `P` relative to its trace; PSD within rounding
    /// when ≥ −1e-10.
    pub fn covariance_health(&self) -> (f64, f64) {
        let asym = (&self.p - self.p.transpose()).abs().max();
        let min_eig = self.p.clone().symmetric_eigenvalues().min();
        (asym, min_eig / self.p.trace().abs().max(f64::MIN_POSITIVE))
    }
}

fn check_state(x: &[f64; N_STATES], pp: &PlantParams) -> Result<()> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::EstimatorDivergence(format!("non-finite estimate {x:?}")));
    }
    if !(x[IDX_P] > 0.0) {
        return Err(Error::domain(format!("estimated pressure {} bar <= 0", x[IDX_P])));
    }
    plant::gas_volume(x[IDX_L], pp)?;
    Ok(())
}

/// Continuous-time derivative of the simplified model. The augmented inflow
/// states have zero drift.
pub fn simplified_rhs(x: &[f64; N_STATES], u: &EstimatorInputs, model: &SimplifiedModel) -> Result<[f64; N_STATES]> {
    let pp = &model.params;
    check_state(x, pp)?;
    let [p, l, x_h2, x_o2, n_h2, n_o2] = *x;
    let (v, dv_dl) = plant::gas_volume(l, pp)?;
    let rt = pp.rt();
    let level_rate = (model.m_in - u.m_lye) / (pp.lye_density * pp.separator_area);
    let v_rate = dv_dl * level_rate;
    let n_d = plant::dissolved_o2_sink(u.m_lye, p, pp);
    let in_o2 = n_o2 - n_d;
    let p_rate = (n_h2 + in_o2 - u.n_out_gas) * rt / (v * BAR) - p * v_rate / v;
    let x_rate = rt * (n_h2 * x_o2 - in_o2 * x_h2) / (p * BAR * v);
    Ok([p_rate, level_rate, x_rate, -x_rate, 0.0, 0.0])
}

/// One explicit Euler step of length `model.t_s`.
pub fn transition_f(x: &[f64; N_STATES], u: &EstimatorInputs, model: &SimplifiedModel) -> Result<[f64; N_STATES]> {
    let dx = simplified_rhs(x, u, model)?;
    let mut next = *x;
    for i in 0..N_STATES {
        next[i] += model.t_s * dx[i];
    }
    Ok(next)
}

/// Measurement map `h(x) = H·x`.
pub fn measure(x: &[f64; N_STATES]) -> [f64; N_MEAS] {
    [x[IDX_P], x[IDX_L], x[IDX_XH2], x[IDX_XO2]]
}

/// `∂f/∂x` of the Euler transition.
pub fn jacobian_f(x: &[f64; N_STATES], u: &EstimatorInputs, model: &SimplifiedModel) -> Result<Matrix> {
    let pp = &model.params;
    let dx = simplified_rhs(x, u, model)?;
    let [p, l, x_h2, x_o2, n_h2, n_o2] = *x;
    let (v, _) = plant::gas_volume(l, pp)?;
    let area = pp.separator_area;
    let s_o2 = pp.o2.solubility;
    let rt = pp.rt();
    let level_rate = dx[IDX_L];
    let n_d = plant::dissolved_o2_sink(u.m_lye, p, pp);
    // a = RT / (pV) with p in Pa; c = RT / V scaled to bar.
    let a = rt / (p * BAR * v);
    let c = rt / (v * BAR);

    let mut j = Matrix::zeros(N_STATES, N_STATES);
    j[(0, 0)] = -c * u.m_lye * s_o2 + area * level_rate / v;
    j[(0, 1)] = dx[IDX_P] * area / v;
    j[(0, 4)] = c;
    j[(0, 5)] = c;

    let dxr_dp = a * u.m_lye * s_o2 * x_h2 - dx[IDX_XH2] / p;
    let dxr_dl = dx[IDX_XH2] * area / v;
    let dxr_dxh2 = -a * (n_o2 - n_d);
    let dxr_dxo2 = a * n_h2;
    let dxr_dnh2 = a * x_o2;
    let dxr_dno2 = -a * x_h2;
    let row = [dxr_dp, dxr_dl, dxr_dxh2, dxr_dxo2, dxr_dnh2, dxr_dno2];
    for (k, v) in row.iter().enumerate() {
        j[(2, k)] = *v;
        j[(3, k)] = -*v;
    }

    let mut f = Matrix::identity(N_STATES, N_STATES);
    f += j * model.t_s;
    Ok(f)
}

/// `∂f/∂u` of the Euler transition, columns `[n_out_gas, m_lye]`.
pub fn jacobian_g(x: &[f64; N_STATES], u: &EstimatorInputs, model: &SimplifiedModel) -> Result<Matrix> {
    let _ = u;
    let pp = &model.params;
    check_state(x, pp)?;
    let [p, l, x_h2, _, _, _] = *x;
    let (v, _) = plant::gas_volume(l, pp)?;
    let rt = pp.rt();
    let s_o2 = pp.o2.solubility;
    let rho = pp.lye_density;
    let mut g = Matrix::zeros(N_STATES, N_INPUTS);
    g[(0, 0)] = -rt / (v * BAR);
    g[(0, 1)] = -s_o2 * p * rt / (v * BAR) - p / (rho * v);
    g[(1, 1)] = -1.0 / (rho * pp.separator_area);
    g[(2, 1)] = rt * s_o2 * x_h2 / (BAR * v);
    g[(3, 1)] = -g[(2, 1)];
    Ok(g * model.t_s)
}

/// Selector of the four measured states.
pub fn jacobian_h() -> Matrix {
    let mut h = Matrix::zeros(N_MEAS, N_STATES);
    for i in 0..N_MEAS {
        h[(i, i)] = 1.0;
    }
    h
}

/// Time update: `x̂ ← f(x̂, u)`, `P ← F·P·Fᵀ + Q`.
pub fn ekf_predict(
    est: &EstimatorState,
    u: &EstimatorInputs,
    noise: &NoiseConfig,
    model: &SimplifiedModel,
) -> Result<EstimatorState> {
    let f = jacobian_f(&est.x, u, model)?;
    let x = transition_f(&est.x, u, model)?;
    let mut p = &f * &est.p * f.transpose() + &noise.q;
    symmetrize(&mut p);
    Ok(EstimatorState { x, p })
}

/// Measurement update with `K = P·Hᵀ·(H·P·Hᵀ + R)⁻¹` and `P ← (I − K·H)·P`.
/// Compositions are clamped to `[0, 1]` and rescaled to sum to one.
pub fn ekf_update(est: &EstimatorState, y: &Measurement, noise: &NoiseConfig) -> Result<EstimatorState> {
    y.validate()?;
    let h = jacobian_h();
    let s = &h * &est.p * h.transpose() + &noise.r;
    let hp = &h * &est.p;
    // S is symmetric, so K = (S⁻¹·H·P)ᵀ.
    let kt = solve_linear(&s, &hp).map_err(|e| match e {
        Error::Singular { condition } => {
            Error::EstimatorDivergence(format!("innovation covariance is singular (condition {condition:e})"))
        }
        e => e,
    })?;
    let k = kt.transpose();
    let predicted = measure(&est.x);
    let yv = y.as_array();
    let mut x = est.x;
    for i in 0..N_STATES {
        x[i] += (0..N_MEAS).map(|j| k[(i, j)] * (yv[j] - predicted[j])).sum::<f64>();
    }
    let xh = x[IDX_XH2].clamp(0.0, 1.0);
    let xo = x[IDX_XO2].clamp(0.0, 1.0);
    let total = xh + xo;
    if !(total > 0.0) {
        return Err(Error::EstimatorDivergence("both estimated mole fractions are zero".into()));
    }
    x[IDX_XH2] = xh / total;
    x[IDX_XO2] = xo / total;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::EstimatorDivergence(format!("non-finite estimate {x:?}")));
    }

    let mut p = (Matrix::identity(N_STATES, N_STATES) - &k * &h) * &est.p;
    symmetrize(&mut p);
    Ok(EstimatorState { x, p })
}

/// Observability matrix `[H; H·F; …; H·F⁵]`.
pub fn observability_matrix(f: &Matrix, h: &Matrix) -> Matrix {
    let n = f.nrows();
    let m = h.nrows();
    let mut o = Matrix::zeros(m * n, n);
    let mut block = h.clone();
    for k in 0..n {
        o.view_mut((k * m, 0), (m, n)).copy_from(&block);
        block = &block * f;
    }
    o
}

/// Rank of the observability matrix of the linearization at `(x, u)`.
pub fn observability_rank(x: &[f64; N_STATES], u: &EstimatorInputs, model: &SimplifiedModel) -> Result<usize> {
    let f = jacobian_f(x, u, model)?;
    Ok(numerics::rank(&observability_matrix(&f, &jacobian_h()), DEFAULT_RANK_TOL))
}

/// Initial estimate from a plant steady state: the separator block of the
/// state plus the true stack effluent as inflow initials, with `P = I`.
pub fn initialize(steady: &PlantState, u: &PlantInputs, pp: &PlantParams) -> Result<EstimatorState> {
    let sep = steady.separator();
    let (n_o2, n_h2) = plant::stack_effluent(u, steady.pressure_bar(0), pp)?;
    Ok(EstimatorState {
        x: [
            steady.separator_pressure_bar(),
            steady.level,
            steady.x_h2[sep],
            steady.x_o2[sep],
            n_h2,
            n_o2,
        ],
        p: Matrix::identity(N_STATES, N_STATES),
    })
}

/// Estimated upstream HTO `n̄_H2 / n̄_O2`.
pub fn estimated_pipe_hto(est: &EstimatorState) -> Result<f64> {
    let n_o2 = est.x[IDX_NO2];
    if !(n_o2 > COMPOSITION_FLOOR) {
        return Err(Error::SingularComposition { x_o2: n_o2 });
    }
    Ok(est.x[IDX_NH2] / n_o2)
}

/// Predict-then-update filter driven one sample at a time.
#[derive(Debug, Clone)]
pub struct Ekf {
    pub model: SimplifiedModel,
    pub noise: NoiseConfig,
    pub state: EstimatorState,
    last_input: Option<EstimatorInputs>,
}

impl Ekf {
    pub fn new(model: SimplifiedModel, noise: NoiseConfig, initial: EstimatorState) -> Result<Self> {
        noise.validate()?;
        if !(model.t_s > 0.0) {
            return Err(Error::domain("estimator step must be > 0"));
        }
        check_state(&initial.x, &model.params)?;
        Ok(Self {
            model,
            noise,
            state: initial,
            last_input: None,
        })
    }

    /// Processes the measurement of the current tick. The prediction uses the
    /// input applied since the previous tick; the very first call only
    /// updates.
    pub fn step(&mut self, y: &Measurement) -> Result<f64> {
        let predicted = match &self.last_input {
            Some(u) => ekf_predict(&self.state, u, &self.noise, &self.model)?,
            None => self.state.clone(),
        };
        self.state = ekf_update(&predicted, y, &self.noise)?;
        estimated_pipe_hto(&self.state)
    }

    /// Records the input that will act until the next tick.
    pub fn apply_input(&mut self, u: EstimatorInputs) {
        self.last_input = Some(u);
    }
}

/// One row of a recorded run as consumed by [`replay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplaySample {
    pub t: f64,
    pub y: Measurement,
    /// Input applied after this sample.
    pub u: EstimatorInputs,
}

/// Re-runs the filter over a recorded measurement/input stream and returns
/// `(t, ĤTO_n)` per sample.
pub fn replay(
    model: &SimplifiedModel,
    noise: &NoiseConfig,
    initial: EstimatorState,
    samples: &[ReplaySample],
) -> Result<Vec<(f64, f64)>> {
    let mut ekf = Ekf::new(model.clone(), noise.clone(), initial)?;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let hto = ekf.step(&s.y).map_err(|e| e.at(s.t))?;
        ekf.apply_input(s.u);
        out.push((s.t, hto));
    }
    Ok(out)
}

/// Adapter so the continuous simplified model can be integrated directly.
pub struct SimplifiedOde<'a> {
    pub model: &'a SimplifiedModel,
    pub inputs: EstimatorInputs,
}

impl OdeSystem for SimplifiedOde<'_> {
    fn dim(&self) -> usize {
        N_STATES
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let x: [f64; N_STATES] = y.try_into().map_err(|_| Error::domain("state dimension"))?;
        dy.copy_from_slice(&simplified_rhs(&x, &self.inputs, self.model)?);
        Ok(())
    }
}
