//! Ground-truth model of the anodic gas train: stack crossover, `n` pipe
//! compartments and the gas-liquid separator (compartment `n + 1`).
//!
//! All state is held in SI units (Pa, mol, s, K). Pressures cross the public
//! boundary in bar wherever a function name or argument says so.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, IntegratorConfig, Matrix, OdeSystem};

/// Pa per bar.
pub const BAR: f64 = 1.0e5;
/// Convection grows by one diffusion flux per this pressure difference (bar).
pub const CONVECTION_REFERENCE_DP_BAR: f64 = 0.01;
/// Mole fractions below this are treated as absent when forming ratios.
pub const COMPOSITION_FLOOR: f64 = 1e-12;
/// Relative tolerance used for the mole-fraction bounds inside [`plant_rhs`].
const FRACTION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Species {
    H2,
    O2,
}

/// Per-species electrochemical and transport constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesParams {
    pub species: Species,
    /// Electrons transferred per molecule.
    pub z: f64,
    /// Membrane diffusion coefficient, m²/s.
    pub diffusivity: f64,
    /// Solubility in lye, mol/(kg·bar).
    pub solubility: f64,
}

impl SpeciesParams {
    pub fn hydrogen() -> Self {
        Self {
            species: Species::H2,
            z: 2.0,
            diffusivity: 5.59e-9,
            solubility: 8.84e-5,
        }
    }

    pub fn oxygen() -> Self {
        Self {
            species: Species::O2,
            z: 4.0,
            diffusivity: 0.0,
            solubility: 8.13e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.z != 2.0 && self.z != 4.0 {
            return Err(Error::domain(format!("{:?}: z must be 2 or 4", self.species)));
        }
        if !(self.diffusivity >= 0.0) {
            return Err(Error::domain(format!("{:?}: diffusivity must be >= 0", self.species)));
        }
        if !(self.solubility > 0.0) {
            return Err(Error::domain(format!("{:?}: solubility must be > 0", self.species)));
        }
        Ok(())
    }
}

/// Equipment and property data for the gas train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Active electrode area (also the diffusion area), m².
    pub electrode_area: f64,
    /// Membrane thickness, m.
    pub membrane_thickness: f64,
    /// Operating temperature, K.
    pub temperature: f64,
    /// Number of equal pipe segments.
    pub n_segments: usize,
    /// Total pipe length, m.
    pub pipe_length: f64,
    /// Pipe radius, m.
    pub pipe_radius: f64,
    /// Gas dynamic viscosity, Pa·s.
    pub viscosity: f64,
    /// Separator total volume, m³.
    pub separator_volume: f64,
    /// Separator horizontal cross-section, m².
    pub separator_area: f64,
    /// Lye density, kg/m³.
    pub lye_density: f64,
    /// Faraday constant, C/mol.
    pub faraday: f64,
    /// Universal gas constant, J/(mol·K).
    pub gas_constant: f64,
    pub h2: SpeciesParams,
    pub o2: SpeciesParams,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            electrode_area: 598.0,
            membrane_thickness: 5.0e-3,
            temperature: 353.15,
            n_segments: 5,
            pipe_length: 1.0,
            pipe_radius: 0.005,
            viscosity: 1.1e-5,
            separator_volume: 2.0,
            separator_area: 2.0,
            lye_density: 1290.0,
            faraday: 96485.332,
            gas_constant: 8.314_462_618,
            h2: SpeciesParams::hydrogen(),
            o2: SpeciesParams::oxygen(),
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("electrode_area", self.electrode_area),
            ("membrane_thickness", self.membrane_thickness),
            ("temperature", self.temperature),
            ("pipe_length", self.pipe_length),
            ("pipe_radius", self.pipe_radius),
            ("viscosity", self.viscosity),
            ("separator_volume", self.separator_volume),
            ("separator_area", self.separator_area),
            ("lye_density", self.lye_density),
            ("faraday", self.faraday),
            ("gas_constant", self.gas_constant),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if self.n_segments < 1 {
            return Err(Error::domain("n_segments must be >= 1"));
        }
        if self.h2.species != Species::H2 || self.o2.species != Species::O2 {
            return Err(Error::domain("species parameters are swapped"));
        }
        self.h2.validate()?;
        self.o2.validate()
    }

    /// `R·T`, J/mol.
    pub fn rt(&self) -> f64 {
        self.gas_constant * self.temperature
    }

    /// Number of balance volumes (`n` pipe segments plus the separator).
    pub fn n_compartments(&self) -> usize {
        self.n_segments + 1
    }

    /// Gas volume of one pipe segment, m³. The full segment cross-section is
    /// taken as gas space.
    pub fn segment_volume(&self) -> f64 {
        PI * self.pipe_radius.powi(2) * self.pipe_length / self.n_segments as f64
    }

    /// Segment conductance `n·π·r⁴ / (16·η·R·T·l_p)`, mol/(s·Pa²).
    pub fn segment_conductance(&self) -> f64 {
        self.n_segments as f64 * PI * self.pipe_radius.powi(4)
            / (16.0 * self.viscosity * self.rt() * self.pipe_length)
    }

    /// Level at which the gas occupies half of the separator, m.
    pub fn half_full_level(&self) -> f64 {
        0.5 * self.separator_volume / self.separator_area
    }
}

/// Full distributed state. Index `n_segments` is the separator.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Compartment pressures, Pa.
    pub pressure: Vec<f64>,
    pub x_h2: Vec<f64>,
    pub x_o2: Vec<f64>,
    /// Separator liquid level, m.
    pub level: f64,
}

impl PlantState {
    pub fn n_compartments(&self) -> usize {
        self.pressure.len()
    }

    pub fn separator(&self) -> usize {
        self.pressure.len() - 1
    }

    pub fn separator_pressure_bar(&self) -> f64 {
        self.pressure[self.separator()] / BAR
    }

    pub fn pressure_bar(&self, i: usize) -> f64 {
        self.pressure[i] / BAR
    }

    /// HTO of compartment `i` (0-based).
    pub fn hto(&self, i: usize) -> Result<f64> {
        hto(self.x_h2[i], self.x_o2[i])
    }

    /// HTO of every compartment, pipe first, separator last.
    pub fn hto_profile(&self) -> Result<Vec<f64>> {
        (0..self.n_compartments()).map(|i| self.hto(i)).collect()
    }

    pub fn dim(&self) -> usize {
        3 * self.n_compartments() + 1
    }

    /// Flattened `[p.., x_H2.., x_O2.., l]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.pressure);
        v.extend_from_slice(&self.x_h2);
        v.extend_from_slice(&self.x_o2);
        v.push(self.level);
        v
    }

    pub fn from_slice(n_compartments: usize, y: &[f64]) -> Self {
        let m = n_compartments;
        debug_assert_eq!(y.len(), 3 * m + 1);
        Self {
            pressure: y[..m].to_vec(),
            x_h2: y[m..2 * m].to_vec(),
            x_o2: y[2 * m..3 * m].to_vec(),
            level: y[3 * m],
        }
    }

    /// Checks positivity, composition bounds and closure, and the separator
    /// volume range.
    pub fn check_invariants(&self, pp: &PlantParams) -> Result<()> {
        if self.n_compartments() != pp.n_compartments() {
            return Err(Error::domain(format!(
                "state has {} compartments, parameters expect {}",
                self.n_compartments(),
                pp.n_compartments()
            )));
        }
        for i in 0..self.n_compartments() {
            let (p, xh, xo) = (self.pressure[i], self.x_h2[i], self.x_o2[i]);
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::domain(format!("compartment {}: pressure {p} Pa", i + 1)));
            }
            if !(0.0..=1.0).contains(&xh) || !(0.0..=1.0).contains(&xo) {
                return Err(Error::domain(format!(
                    "compartment {}: mole fractions ({xh}, {xo}) outside [0, 1]",
                    i + 1
                )));
            }
            if (xh + xo - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "compartment {}: x_H2 + x_O2 = {}",
                    i + 1,
                    xh + xo
                )));
            }
        }
        gas_volume(self.level, pp).map(|_| ())
    }
}

/// Manipulated and disturbance inputs of the gas train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantInputs {
    /// Current density, A/m².
    pub current_density: f64,
    /// Anode-cathode pressure difference, bar.
    pub dp: f64,
    /// Liquid outflow from the separator, kg/s.
    pub m_lye: f64,
    /// Gas outflow from the separator, mol/s.
    pub n_out_gas: f64,
    /// Liquid inflow to the separator, kg/s.
    pub m_in: f64,
}

impl PlantInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.current_density >= 0.0) {
            return Err(Error::domain("current density must be >= 0"));
        }
        if !(self.m_lye >= 0.0) {
            return Err(Error::domain("lye outflow must be >= 0"));
        }
        if !(self.n_out_gas >= 0.0) {
            return Err(Error::domain("gas outflow must be >= 0"));
        }
        if !self.dp.is_finite() || !(self.m_in >= 0.0) {
            return Err(Error::domain("non-finite pressure difference or negative lye inflow"));
        }
        Ok(())
    }
}

/// Faradaic production `I·A_c / (z·F)`, mol/s.
pub fn production_rate(current_density: f64, sp: &SpeciesParams, pp: &PlantParams) -> Result<f64> {
    if !(current_density >= 0.0) {
        return Err(Error::domain(format!("current density {current_density} < 0")));
    }
    Ok(current_density * pp.electrode_area / (sp.z * pp.faraday))
}

/// Fickian membrane crossover at pressure `p_bar`, mol/s.
///
/// The dissolved concentration is `ρ·S·p` (mol/m³), hence the lye density
/// factor.
pub fn diffusion_rate(p_bar: f64, sp: &SpeciesParams, pp: &PlantParams) -> Result<f64> {
    if !(p_bar >= 0.0) {
        return Err(Error::domain(format!("pressure {p_bar} bar < 0")));
    }
    Ok(pp.lye_density * p_bar * sp.solubility * sp.diffusivity * pp.electrode_area
        / pp.membrane_thickness)
}

/// Pressure-driven convective crossover, proportional to `dp`. Negative for
/// reversed pressure difference.
pub fn convection_rate(n_diff: f64, dp_bar: f64) -> f64 {
    n_diff * dp_bar / CONVECTION_REFERENCE_DP_BAR
}

/// Laminar molar flow from a compartment at `p_i_bar` into the next one at
/// `p_next_bar`, mol/s.
pub fn hagen_poiseuille_flow(p_i_bar: f64, p_next_bar: f64, pp: &PlantParams) -> Result<f64> {
    if !(p_i_bar > 0.0 && p_next_bar > 0.0) {
        return Err(Error::domain(format!(
            "non-positive pressures ({p_i_bar}, {p_next_bar}) bar"
        )));
    }
    Ok(segment_flow_pa(p_i_bar * BAR, p_next_bar * BAR, pp.segment_conductance()))
}

// (a - b)(a + b) keeps the small difference exact to the last bit of a and b.
#[inline]
fn segment_flow_pa(p_i: f64, p_next: f64, conductance: f64) -> f64 {
    conductance * (p_i - p_next) * (p_i + p_next)
}

/// O₂ carried away dissolved in the lye leaving the separator, mol/s.
pub fn dissolved_o2_sink(m_lye: f64, p_sep_bar: f64, pp: &PlantParams) -> f64 {
    m_lye * pp.o2.solubility * p_sep_bar
}

/// Separator gas volume and its derivative with respect to level.
pub fn gas_volume(level: f64, pp: &PlantParams) -> Result<(f64, f64)> {
    let liquid = level * pp.separator_area;
    if !(level >= 0.0 && liquid < pp.separator_volume) {
        return Err(Error::domain(format!(
            "level {level} m outside [0, {}) m",
            pp.separator_volume / pp.separator_area
        )));
    }
    Ok((pp.separator_volume - liquid, -pp.separator_area))
}

/// Anodic stack effluent `(n_O2, n_H2)` in mol/s with crossover evaluated at
/// the first compartment pressure.
pub fn stack_effluent(u: &PlantInputs, p1_bar: f64, pp: &PlantParams) -> Result<(f64, f64)> {
    let n_o2 = production_rate(u.current_density, &pp.o2, pp)?;
    let n_diff = diffusion_rate(p1_bar, &pp.h2, pp)?;
    let n_h2 = (n_diff + convection_rate(n_diff, u.dp)).max(0.0);
    Ok((n_o2, n_h2))
}

/// Hydrogen-to-oxygen ratio.
pub fn hto(x_h2: f64, x_o2: f64) -> Result<f64> {
    if !(x_o2 > COMPOSITION_FLOOR) {
        return Err(Error::SingularComposition { x_o2 });
    }
    Ok(x_h2 / x_o2)
}

/// Time derivative of the full state (fields hold rates: Pa/s, 1/s, m/s).
pub fn plant_rhs(s: &PlantState, u: &PlantInputs, pp: &PlantParams) -> Result<PlantState> {
    let m = pp.n_compartments();
    if s.n_compartments() != m {
        return Err(Error::domain("state/parameter compartment mismatch"));
    }
    let y = s.to_vec();
    let mut dy = vec![0.0; y.len()];
    plant_rhs_slice(&y, u, pp, &mut dy)?;
    Ok(PlantState::from_slice(m, &dy))
}

/// Slice form of [`plant_rhs`] on the flattened layout of [`PlantState::to_vec`].
pub fn plant_rhs_slice(y: &[f64], u: &PlantInputs, pp: &PlantParams, dy: &mut [f64]) -> Result<()> {
    let m = pp.n_compartments();
    let sep = m - 1;
    let (p, rest) = y.split_at(m);
    let (xh, rest) = rest.split_at(m);
    let (xo, rest) = rest.split_at(m);
    let level = rest[0];

    for i in 0..m {
        if !(p[i] > 0.0 && p[i].is_finite()) {
            return Err(Error::domain(format!("compartment {}: pressure {} Pa", i + 1, p[i])));
        }
        let lo = -FRACTION_SLACK;
        let hi = 1.0 + FRACTION_SLACK;
        if !(xh[i] >= lo && xh[i] <= hi && xo[i] >= lo && xo[i] <= hi) {
            return Err(Error::domain(format!(
                "compartment {}: mole fractions ({}, {}) out of range",
                i + 1,
                xh[i],
                xo[i]
            )));
        }
    }
    let (v_sep, dv_dl) = gas_volume(level, pp)?;

    let rt = pp.rt();
    let level_rate = (u.m_in - u.m_lye) / (pp.lye_density * pp.separator_area);
    let v_sep_rate = dv_dl * level_rate;

    // Component inflows per compartment and total outflow.
    let mut in_h2 = vec![0.0; m];
    let mut in_o2 = vec![0.0; m];
    let mut out_total = vec![0.0; m];

    let (feed_o2, feed_h2) = stack_effluent(u, p[0] / BAR, pp)?;
    in_h2[0] += feed_h2;
    in_o2[0] += feed_o2;

    let g = pp.segment_conductance();
    for i in 0..sep {
        let f = segment_flow_pa(p[i], p[i + 1], g);
        // Upwind composition: the donor compartment sets what is carried.
        let (donor, receiver, flow) = if f >= 0.0 { (i, i + 1, f) } else { (i + 1, i, -f) };
        in_h2[receiver] += flow * xh[donor];
        in_o2[receiver] += flow * xo[donor];
        out_total[donor] += flow;
    }
    out_total[sep] += u.n_out_gas;
    in_o2[sep] -= dissolved_o2_sink(u.m_lye, p[sep] / BAR, pp);

    let v_seg = pp.segment_volume();
    for i in 0..m {
        let (v, v_rate) = if i == sep { (v_sep, v_sep_rate) } else { (v_seg, 0.0) };
        let n_in = in_h2[i] + in_o2[i];
        dy[i] = ((n_in - out_total[i]) * rt - p[i] * v_rate) / v;
        let dx = rt * (in_h2[i] * xo[i] - in_o2[i] * xh[i]) / (p[i] * v);
        dy[m + i] = dx;
        dy[2 * m + i] = -dx;
    }
    dy[3 * m] = level_rate;
    Ok(())
}

/// Infinity norm of the rates expressed as fractions of the train throughput:
/// molar accumulation `p'·V/RT` and composition change `x'·pV/RT` over the
/// stack effluent, and level change as a fraction of the lye feed.
pub fn normalized_residual(s: &PlantState, rates: &PlantState, u: &PlantInputs, pp: &PlantParams) -> Result<f64> {
    let (feed_o2, feed_h2) = stack_effluent(u, s.pressure_bar(0), pp)?;
    let throughput = (feed_o2 + feed_h2).max(u.n_out_gas).max(1e-9);
    let (v_sep, _) = gas_volume(s.level, pp)?;
    let rt = pp.rt();
    let mut r: f64 = 0.0;
    for i in 0..s.n_compartments() {
        let v = if i == s.separator() { v_sep } else { pp.segment_volume() };
        r = r.max((rates.pressure[i] * v / rt).abs());
        let holdup = s.pressure[i] * v / rt;
        r = r.max((rates.x_h2[i] * holdup).abs()).max((rates.x_o2[i] * holdup).abs());
    }
    r /= throughput;
    let lye = pp.lye_density * pp.separator_area * rates.level.abs() / u.m_in.max(1e-9);
    Ok(r.max(lye))
}

/// Adapter exposing the plant to the ODE integrators under constant inputs.
pub struct PlantOde<'a> {
    pub params: &'a PlantParams,
    pub inputs: PlantInputs,
}

impl OdeSystem for PlantOde<'_> {
    fn dim(&self) -> usize {
        3 * self.params.n_compartments() + 1
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        plant_rhs_slice(y, &self.inputs, self.params, dy)
    }
}

/// Steady-state tolerance on [`normalized_residual`].
pub const STEADY_STATE_TOL: f64 = 1e-10;

/// Equilibrium for constant inputs by damped Newton on the algebraic system,
/// falling back to a long integration when Newton stalls.
///
/// The liquid level is neutrally stable, so it is pinned at `guess.level`;
/// inputs must satisfy `m_in = m_lye`.
pub fn steady_state(u: &PlantInputs, pp: &PlantParams, guess: &PlantState) -> Result<PlantState> {
    pp.validate()?;
    u.validate()?;
    if (u.m_in - u.m_lye).abs() > 1e-12 * u.m_in.abs().max(1.0) {
        return Err(Error::domain(format!(
            "no level equilibrium with m_in = {} and m_lye = {}",
            u.m_in, u.m_lye
        )));
    }
    match newton_steady_state(u, pp, guess) {
        Ok(s) => Ok(s),
        Err(first) => {
            let residual = match first {
                Error::NonConvergence { residual } => residual,
                _ => f64::INFINITY,
            };
            // Relax toward the attractor, then polish.
            let ode = PlantOde { params: pp, inputs: *u };
            let cfg = IntegratorConfig {
                max_step: 60.0,
                ..IntegratorConfig::default()
            };
            let horizon = 24.0 * 3600.0;
            let y = numerics::integrate_to(&ode, &guess.to_vec(), 0.0, horizon, &cfg)
                .map_err(|_| Error::NonConvergence { residual })?;
            let relaxed = PlantState::from_slice(pp.n_compartments(), &y);
            newton_steady_state(u, pp, &relaxed)
        }
    }
}

fn newton_steady_state(u: &PlantInputs, pp: &PlantParams, guess: &PlantState) -> Result<PlantState> {
    let m = pp.n_compartments();
    let dim = 3 * m + 1;
    let pinned_level = guess.level;
    let rt = pp.rt();
    let (feed_o2, feed_h2) = stack_effluent(u, guess.pressure[0] / BAR, pp)?;
    let flow_scale = (feed_o2 + feed_h2).max(u.n_out_gas).max(1e-6);

    // Residuals in mol/s so that pressure and composition rows are comparable.
    let residual = |z: &[f64]| -> Result<Vec<f64>> {
        let mut dy = vec![0.0; dim];
        plant_rhs_slice(z, u, pp, &mut dy)?;
        let (v_sep, _) = gas_volume(z[3 * m], pp)?;
        let mut r = vec![0.0; dim];
        for i in 0..m {
            let v = if i == m - 1 { v_sep } else { pp.segment_volume() };
            r[i] = dy[i] * v / rt;
            r[m + i] = dy[m + i] * z[i] * v / rt;
            r[2 * m + i] = (z[m + i] + z[2 * m + i] - 1.0) * flow_scale;
        }
        r[3 * m] = (z[3 * m] - pinned_level) * flow_scale;
        Ok(r)
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let converged = |z: &[f64]| -> Result<f64> {
        let s = PlantState::from_slice(m, z);
        let rates = plant_rhs(&s, u, pp)?;
        normalized_residual(&s, &rates, u, pp)
    };

    let mut z = guess.to_vec();
    let mut r = residual(&z)?;
    let mut best = converged(&z)?;
    for _ in 0..60 {
        if best < STEADY_STATE_TOL {
            break;
        }
        let mut jac = Matrix::zeros(dim, dim);
        for j in 0..dim {
            let h = 1e-7 * z[j].abs().max(if j < m { 1.0 } else { 1e-4 });
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let rp = residual(&zp)?;
            let rm = residual(&zm)?;
            for i in 0..dim {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rhs = Matrix::from_column_slice(dim, 1, &r);
        let step = match jac.lu().solve(&rhs) {
            Some(s) => s,
            None => break,
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial: Vec<f64> = z.iter().enumerate().map(|(i, v)| v - lambda * step[i]).collect();
            for x in &mut trial[m..3 * m] {
                *x = x.clamp(0.0, 1.0);
            }
            if let Ok(rt_) = residual(&trial) {
                if norm(&rt_) < norm(&r) || converged(&trial).map_or(false, |c| c < best) {
                    z = trial;
                    r = rt_;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        let now = converged(&z)?;
        if !accepted || now >= best && now > STEADY_STATE_TOL && lambda < 1e-6 {
            best = best.min(now);
            break;
        }
        best = now;
    }
    if best < STEADY_STATE_TOL {
        Ok(PlantState::from_slice(m, &z))
    } else {
        Err(Error::NonConvergence { residual: best })
    }
}

/// Analytic approximation of the equilibrium at a given separator pressure,
/// used to seed [`steady_state`].
pub fn equilibrium_guess(p_sep_bar: f64, u: &PlantInputs, level: f64, pp: &PlantParams) -> Result<PlantState> {
    let m = pp.n_compartments();
    let g = pp.segment_conductance();
    let p_sep = p_sep_bar * BAR;
    let mut p1 = p_sep;
    let mut pressures = vec![p_sep; m];
    let mut feed = (0.0, 0.0);
    for _ in 0..4 {
        feed = stack_effluent(u, p1 / BAR, pp)?;
        let flow = feed.0 + feed.1;
        for i in (0..m - 1).rev() {
            pressures[i] = (pressures[i + 1].powi(2) + flow / g).sqrt();
        }
        p1 = pressures[0];
    }
    let (n_o2, n_h2) = feed;
    let n_d = dissolved_o2_sink(u.m_lye, p_sep_bar, pp);
    let pipe_x = n_h2 / (n_h2 + n_o2);
    let sep_o2 = n_o2 - n_d;
    if !(sep_o2 > 0.0) {
        return Err(Error::domain("dissolved O2 sink exceeds O2 production"));
    }
    let sep_x = n_h2 / (n_h2 + sep_o2);
    let mut x_h2 = vec![pipe_x; m];
    x_h2[m - 1] = sep_x;
    let x_o2 = x_h2.iter().map(|x| 1.0 - x).collect();
    Ok(PlantState {
        pressure: pressures,
        x_h2,
        x_o2,
        level,
    })
}

/// Gas outflow that balances the separator at `p_sep_bar` for the given
/// stack inputs.
pub fn balancing_gas_outflow(p_sep_bar: f64, u: &PlantInputs, pp: &PlantParams) -> Result<f64> {
    let guess = equilibrium_guess(p_sep_bar, u, pp.half_full_level(), pp)?;
    let (n_o2, n_h2) = stack_effluent(u, guess.pressure_bar(0), pp)?;
    Ok(n_o2 + n_h2 - dissolved_o2_sink(u.m_lye, p_sep_bar, pp))
}

/// Equilibrium with the separator held at `p_sep_bar`: the gas outflow is
/// chosen to balance the train and the result is polished by [`steady_state`].
pub fn steady_state_at_pressure(
    p_sep_bar: f64,
    u: &PlantInputs,
    level: f64,
    pp: &PlantParams,
) -> Result<(PlantState, PlantInputs)> {
    let mut inputs = *u;
    inputs.m_lye = inputs.m_in;
    // The balancing outflow depends on p_1, which sits a fraction of a Pa
    // above the separator; one refinement is exact to rounding.
    inputs.n_out_gas = balancing_gas_outflow(p_sep_bar, &inputs, pp)?;
    let guess = equilibrium_guess(p_sep_bar, &inputs, level, pp)?;
    let s = steady_state(&inputs, pp, &guess)?;
    Ok((s, inputs))
}
