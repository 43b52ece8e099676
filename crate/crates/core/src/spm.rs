//! Discretized single particle model.
//!
//! Each electrode is one spherical particle whose radial diffusion is reduced
//! to two states by a parabolic concentration profile: the volume-average
//! concentration and the volume-average concentration flux. The four states
//! evolve by an explicit affine update driven by the cell current, and the
//! surface concentrations feed Butler-Volmer kinetics and the open-circuit
//! potentials to produce the terminal voltage.
//!
//! Current is positive on charge: a positive current lithiates the negative
//! electrode and delithiates the positive one.

use std::fmt;

use thiserror::Error;

use crate::params::{CellParameters, ParamError};
use crate::protocols::{CurrentProfile, Termination, Trace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Electrode {
    Negative,
    Positive,
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Electrode::Negative => f.write_str("negative"),
            Electrode::Positive => f.write_str("positive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error("time step must be finite and > 0, got {0}")]
    BadTimeStep(f64),
    #[error(
        "time step {dt} s is unstable for the {electrode} electrode (30 D dt / R^2 = {ratio} >= 1)"
    )]
    Unstable {
        electrode: Electrode,
        dt: f64,
        ratio: f64,
    },
    #[error("{electrode} surface stoichiometry {theta} outside (0, 1)")]
    InvalidSurfaceState { electrode: Electrode, theta: f64 },
    #[error("surface concentration {c_ss} outside [0, {c_max}]")]
    ConcentrationOutOfRange { c_ss: f64, c_max: f64 },
    #[error("exchange current density must be > 0, got {0}")]
    DegenerateExchangeCurrent(f64),
    #[error("reaction surface area must be > 0, got {0}")]
    DegenerateSurface(f64),
    #[error("current profile is empty")]
    EmptyProfile,
}

/// State of the discrete model: average concentrations [mol/m^3] and
/// average concentration fluxes [mol/m^4] of both electrodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub cbar_n: f64,
    pub cbar_p: f64,
    pub cfbar_n: f64,
    pub cfbar_p: f64,
}

impl SimState {
    pub fn to_array(&self) -> [f64; 4] {
        [self.cbar_n, self.cbar_p, self.cfbar_n, self.cfbar_p]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        SimState {
            cbar_n: a[0],
            cbar_p: a[1],
            cfbar_n: a[2],
            cfbar_p: a[3],
        }
    }

    /// Average concentrations inside `[0, c_max]`.
    pub fn is_valid(&self, params: &CellParameters) -> bool {
        let e = &params.estimands;
        (0.0..=e.c_max_n).contains(&self.cbar_n) && (0.0..=e.c_max_p).contains(&self.cbar_p)
    }
}

/// Rest state at the initial concentrations.
pub fn init_state(params: &CellParameters) -> SimState {
    SimState {
        cbar_n: params.estimands.c_n0,
        cbar_p: params.estimands.c_p0,
        cfbar_n: 0.0,
        cfbar_p: 0.0,
    }
}

/// Reaction surface area `3 a L eps / R_s` of one electrode [m^2].
pub fn reaction_area(params: &CellParameters, electrode: Electrode) -> f64 {
    let (f, e) = (&params.fixed, &params.estimands);
    match electrode {
        Electrode::Negative => 3.0 * f.a_n * f.l_n * e.eps_n / f.r_s_n,
        Electrode::Positive => 3.0 * f.a_p * f.l_p * e.eps_p / f.r_s_p,
    }
}

/// Coefficients of the discrete state-space model for one parameter set and
/// sampling period.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteSpm {
    dt: f64,
    /// Diagonal entries acting on the flux states.
    decay: [f64; 2],
    /// Input column, ordered like [`SimState::to_array`].
    input: [f64; 4],
    /// `8 R_s / 35` for each electrode.
    flux_to_surface: [f64; 2],
    /// Direct current feed-through onto the surface concentration.
    current_to_surface: [f64; 2],
    c_max: [f64; 2],
    r_eff: [f64; 2],
    area: [f64; 2],
    c_e: f64,
    r0: f64,
    kinetic_scale: f64,
}

impl DiscreteSpm {
    /// Builds the model matrices. Rejects a sampling period that breaks the
    /// stability of the explicit flux update.
    pub fn new(params: &CellParameters, dt: f64) -> Result<Self, ModelError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(ModelError::BadTimeStep(dt));
        }
        let (f, e) = (&params.fixed, &params.estimands);
        let faraday = params.constants.faraday;
        let ratio_n = 30.0 * e.d_n * dt / (f.r_s_n * f.r_s_n);
        let ratio_p = 30.0 * e.d_p * dt / (f.r_s_p * f.r_s_p);
        for (electrode, ratio) in [(Electrode::Negative, ratio_n), (Electrode::Positive, ratio_p)] {
            if !(ratio < 1.0) {
                return Err(ModelError::Unstable {
                    electrode,
                    dt,
                    ratio,
                });
            }
        }
        let vol_n = faraday * f.a_n * f.l_n * e.eps_n;
        let vol_p = faraday * f.a_p * f.l_p * e.eps_p;
        Ok(DiscreteSpm {
            dt,
            decay: [1.0 - ratio_n, 1.0 - ratio_p],
            input: [
                dt / vol_n,
                -dt / vol_p,
                15.0 * dt / (2.0 * f.r_s_n * vol_n),
                -15.0 * dt / (2.0 * f.r_s_p * vol_p),
            ],
            flux_to_surface: [8.0 * f.r_s_n / 35.0, 8.0 * f.r_s_p / 35.0],
            current_to_surface: [
                f.r_s_n / (35.0 * e.d_n) * f.r_s_n / (3.0 * vol_n),
                -f.r_s_p / (35.0 * e.d_p) * f.r_s_p / (3.0 * vol_p),
            ],
            c_max: [e.c_max_n, e.c_max_p],
            r_eff: [e.r_eff_n, e.r_eff_p],
            area: [
                reaction_area(params, Electrode::Negative),
                reaction_area(params, Electrode::Positive),
            ],
            c_e: f.c_e,
            r0: e.r0,
            kinetic_scale: params.constants.kinetic_voltage_scale(f.temperature),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn step(&self, s: &SimState, current: f64) -> SimState {
        SimState {
            cbar_n: s.cbar_n + self.input[0] * current,
            cbar_p: s.cbar_p + self.input[1] * current,
            cfbar_n: self.decay[0] * s.cfbar_n + self.input[2] * current,
            cfbar_p: self.decay[1] * s.cfbar_p + self.input[3] * current,
        }
    }

    #[inline]
    pub fn surface(&self, s: &SimState, current: f64) -> (f64, f64) {
        (
            s.cbar_n + self.flux_to_surface[0] * s.cfbar_n + self.current_to_surface[0] * current,
            s.cbar_p + self.flux_to_surface[1] * s.cfbar_p + self.current_to_surface[1] * current,
        )
    }

    /// Terminal voltage given the open-circuit potential curves.
    #[inline]
    pub fn voltage(
        &self,
        params: &CellParameters,
        s: &SimState,
        current: f64,
    ) -> Result<f64, ModelError> {
        let (c_ss_n, c_ss_p) = self.surface(s, current);
        let theta_n = stoichiometry(Electrode::Negative, c_ss_n, self.c_max[0])?;
        let theta_p = stoichiometry(Electrode::Positive, c_ss_p, self.c_max[1])?;
        let j0_n = exchange_current(c_ss_n, self.c_max[0], self.c_e, self.r_eff[0])?;
        let j0_p = exchange_current(c_ss_p, self.c_max[1], self.c_e, self.r_eff[1])?;
        let eta_n = self.kinetic_scale * (-current / (2.0 * self.area[0] * j0_n)).asinh();
        let eta_p = self.kinetic_scale * (current / (2.0 * self.area[1] * j0_p)).asinh();
        Ok(params.ocp_p.eval(theta_p) - params.ocp_n.eval(theta_n) + eta_p - eta_n
            + current * self.r0)
    }
}

#[inline]
fn stoichiometry(electrode: Electrode, c_ss: f64, c_max: f64) -> Result<f64, ModelError> {
    let theta = c_ss / c_max;
    if theta > 0.0 && theta < 1.0 {
        Ok(theta)
    } else {
        Err(ModelError::InvalidSurfaceState { electrode, theta })
    }
}

/// One step of the discrete model with sampling period `dt` [s].
pub fn step_state(
    state: &SimState,
    current: f64,
    dt: f64,
    params: &CellParameters,
) -> Result<SimState, ModelError> {
    Ok(DiscreteSpm::new(params, dt)?.step(state, current))
}

/// Surface concentrations `(c_ss_n, c_ss_p)` [mol/m^3] for the state and the
/// current applied during the step that produced it.
pub fn surface_concentrations(state: &SimState, current: f64, params: &CellParameters) -> (f64, f64) {
    let (f, e) = (&params.fixed, &params.estimands);
    let faraday = params.constants.faraday;
    let c_ss_n = state.cbar_n
        + 8.0 * f.r_s_n / 35.0 * state.cfbar_n
        + f.r_s_n / (35.0 * e.d_n) * f.r_s_n / (3.0 * faraday * f.a_n * f.l_n * e.eps_n) * current;
    let c_ss_p = state.cbar_p + 8.0 * f.r_s_p / 35.0 * state.cfbar_p
        - f.r_s_p / (35.0 * e.d_p) * f.r_s_p / (3.0 * faraday * f.a_p * f.l_p * e.eps_p) * current;
    (c_ss_n, c_ss_p)
}

/// Exchange current density [A/m^2].
#[inline]
pub fn exchange_current(c_ss: f64, c_max: f64, c_e: f64, r_eff: f64) -> Result<f64, ModelError> {
    if !(0.0..=c_max).contains(&c_ss) {
        return Err(ModelError::ConcentrationOutOfRange { c_ss, c_max });
    }
    Ok(r_eff * (c_e * c_ss * (c_max - c_ss)).sqrt())
}

/// Butler-Volmer overpotential [V] in inverse hyperbolic sine form. The
/// negative electrode sees `-I`, the positive electrode `+I`.
pub fn overpotential(
    electrode: Electrode,
    current: f64,
    j0: f64,
    area: f64,
    temperature: f64,
) -> Result<f64, ModelError> {
    if !(j0 > 0.0) {
        return Err(ModelError::DegenerateExchangeCurrent(j0));
    }
    if !(area > 0.0) {
        return Err(ModelError::DegenerateSurface(area));
    }
    let x = match electrode {
        Electrode::Negative => -current,
        Electrode::Positive => current,
    };
    let scale = crate::constants::PhysicalConstants::SI.kinetic_voltage_scale(temperature);
    Ok(scale * (x / (2.0 * area * j0)).asinh())
}

/// Terminal voltage [V] for a state and the current that produced it.
pub fn cell_voltage(state: &SimState, current: f64, params: &CellParameters) -> Result<f64, ModelError> {
    let (f, e) = (&params.fixed, &params.estimands);
    let (c_ss_n, c_ss_p) = surface_concentrations(state, current, params);
    let theta_n = stoichiometry(Electrode::Negative, c_ss_n, e.c_max_n)?;
    let theta_p = stoichiometry(Electrode::Positive, c_ss_p, e.c_max_p)?;
    let j0_n = exchange_current(c_ss_n, e.c_max_n, f.c_e, e.r_eff_n)?;
    let j0_p = exchange_current(c_ss_p, e.c_max_p, f.c_e, e.r_eff_p)?;
    let eta_n = overpotential(
        Electrode::Negative,
        current,
        j0_n,
        reaction_area(params, Electrode::Negative),
        f.temperature,
    )?;
    let eta_p = overpotential(
        Electrode::Positive,
        current,
        j0_p,
        reaction_area(params, Electrode::Positive),
        f.temperature,
    )?;
    Ok(params.ocp_p.eval(theta_p) - params.ocp_n.eval(theta_n) + eta_p - eta_n + current * e.r0)
}

/// Simulation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Stop when the voltage leaves `[v_min, v_max]`. Replaying a recorded
    /// current for fitting turns this off so that only physically invalid
    /// states end a run.
    pub enforce_cutoffs: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            enforce_cutoffs: true,
        }
    }
}

/// Runs a current profile with voltage cutoffs enforced.
pub fn simulate_profile(params: &CellParameters, profile: &CurrentProfile) -> Result<Trace, ModelError> {
    simulate_with(params, profile, SimOptions::default())
}

/// Runs a current profile. Row `k` holds time `(k+1) dt`, the current applied
/// over step `k`, and the voltage after it. A row whose voltage crosses a
/// cutoff, or whose state is invalid, ends the trace and is not recorded.
pub fn simulate_with(
    params: &CellParameters,
    profile: &CurrentProfile,
    options: SimOptions,
) -> Result<Trace, ModelError> {
    params.validate()?;
    if profile.samples.is_empty() {
        return Err(ModelError::EmptyProfile);
    }
    let model = DiscreteSpm::new(params, profile.dt)?;
    let (v_min, v_max) = (params.fixed.v_min, params.fixed.v_max);
    let mut state = init_state(params);
    let mut rows = Vec::with_capacity(profile.samples.len());
    let mut termination = Termination::ProfileEnd;
    for (k, &current) in profile.samples.iter().enumerate() {
        state = model.step(&state, current);
        let voltage = match model.voltage(params, &state, current) {
            Ok(v) if v.is_finite() => v,
            _ => {
                termination = Termination::Invalid;
                break;
            }
        };
        if options.enforce_cutoffs {
            if voltage < v_min {
                termination = Termination::VMin;
                break;
            }
            if voltage > v_max {
                termination = Termination::VMax;
                break;
            }
        }
        rows.push(TraceRow {
            t: (k + 1) as f64 * profile.dt,
            current,
            voltage,
        });
    }
    Ok(Trace {
        profile_name: profile.name.clone(),
        dt: profile.dt,
        rows,
        termination,
        c_rate: profile.c_rate,
    })
}
