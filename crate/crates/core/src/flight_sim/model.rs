//! Point-mass longitudinal/lateral model with kinematic attitude.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::flight_state::{wrap_heading_deg, wrap_signed_deg, ControlInput, FlightState};

pub const G: f64 = 9.80665;
pub const RHO: f64 = 1.225;
pub const KT_TO_MS: f64 = 0.514444;
pub const FT_TO_M: f64 = 0.3048;
const MS_TO_FPM: f64 = 196.850_393_7;
const MAX_TURN_BANK_DEG: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftParams {
    pub mass_kg: f64,
    pub wing_area_m2: f64,
    pub lift_slope_per_rad: f64,
    pub max_thrust_n: f64,
    /// Parasite drag coefficient.
    pub k0: f64,
    /// Induced drag factor on CL^2.
    pub k1: f64,
    pub roll_rate_max_dps: f64,
    pub pitch_rate_max_dps: f64,
    pub stall_ias_kt: f64,
    pub max_ias_kt: f64,
}

impl Default for AircraftParams {
    /// Roughly a four-seat single-engine trainer.
    fn default() -> Self {
        AircraftParams {
            mass_kg: 1150.0,
            wing_area_m2: 13.5,
            lift_slope_per_rad: 5.0,
            max_thrust_n: 1900.0,
            k0: 0.027,
            k1: 0.05,
            roll_rate_max_dps: 30.0,
            pitch_rate_max_dps: 10.0,
            stall_ias_kt: 52.0,
            max_ias_kt: 160.0,
        }
    }
}

impl AircraftParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.mass_kg,
            self.wing_area_m2,
            self.lift_slope_per_rad,
            self.max_thrust_n,
            self.k0,
            self.k1,
            self.roll_rate_max_dps,
            self.pitch_rate_max_dps,
            self.stall_ias_kt,
            self.max_ias_kt,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.stall_ias_kt >= self.max_ias_kt {
            return Err(SimError::InvalidParams);
        }
        Ok(())
    }

    fn weight_n(&self) -> f64 {
        self.mass_kg * G
    }

    /// Maximum lift coefficient, from 1 g flight at the stall speed.
    pub fn cl_max(&self) -> f64 {
        let v = self.stall_ias_kt * KT_TO_MS;
        2.0 * self.weight_n() / (RHO * self.wing_area_m2 * v * v)
    }

    pub fn alpha_max_rad(&self) -> f64 {
        self.cl_max() / self.lift_slope_per_rad
    }
}

/// Atmospheric and engine disturbances active during a step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    /// Roll rate imposed by a lateral gust.
    pub gust_roll_rate_dps: f64,
    /// Side acceleration felt during a lateral gust.
    pub gust_side_g: f64,
    /// Vertical air-mass velocity; moves the aircraft without changing airspeed.
    pub vertical_wind_mps: f64,
    /// Multiplier on available thrust; 1 is nominal, 0 an engine failure.
    pub thrust_factor: f64,
}

impl Environment {
    pub fn calm() -> Self {
        Environment { thrust_factor: 1.0, ..Environment::default() }
    }
}

/// Integrated state. SI units, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub h_m: f64,
    pub v_ms: f64,
    /// Flight-path angle.
    pub gamma: f64,
    pub theta: f64,
    pub phi: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Copy)]
struct Forces {
    lift: f64,
    drag: f64,
    thrust: f64,
    stalled: bool,
}

fn forces(s: &AircraftState, input: &ControlInput, p: &AircraftParams, env: &Environment) -> Forces {
    let qs = 0.5 * RHO * s.v_ms * s.v_ms * p.wing_area_m2;
    let alpha_max = p.alpha_max_rad();
    let alpha = s.theta - s.gamma;
    let stalled = alpha > alpha_max;
    let cl = p.lift_slope_per_rad * alpha.clamp(-alpha_max, alpha_max);
    Forces {
        lift: qs * cl,
        drag: qs * (p.k0 + p.k1 * cl * cl),
        thrust: input.throttle.clamp(0.0, 1.0) * p.max_thrust_n * env.thrust_factor.max(0.0),
        stalled,
    }
}

/// Time derivative of (h, V, gamma, theta, phi, psi).
fn derivative(s: &AircraftState, input: &ControlInput, p: &AircraftParams, env: &Environment) -> [f64; 6] {
    let f = forces(s, input, p, env);
    let m = p.mass_kg;
    let v = s.v_ms.max(1.0);
    let turn_phi = s.phi.clamp(-MAX_TURN_BANK_DEG.to_radians(), MAX_TURN_BANK_DEG.to_radians());
    [
        s.v_ms * s.gamma.sin() + env.vertical_wind_mps,
        (f.thrust - f.drag) / m - G * s.gamma.sin(),
        (f.lift * s.phi.cos() - m * G * s.gamma.cos()) / (m * v),
        (input.stick_y.clamp(-1.0, 1.0) * p.pitch_rate_max_dps).to_radians(),
        (input.stick_x.clamp(-1.0, 1.0) * p.roll_rate_max_dps + env.gust_roll_rate_dps).to_radians(),
        G * turn_phi.tan() / v,
    ]
}

impl AircraftState {
    fn add(&self, k: &[f64; 6], scale: f64) -> AircraftState {
        AircraftState {
            h_m: self.h_m + k[0] * scale,
            v_ms: self.v_ms + k[1] * scale,
            gamma: self.gamma + k[2] * scale,
            theta: self.theta + k[3] * scale,
            phi: self.phi + k[4] * scale,
            psi: self.psi + k[5] * scale,
        }
    }

    fn is_finite(&self) -> bool {
        [self.h_m, self.v_ms, self.gamma, self.theta, self.phi, self.psi].iter().all(|v| v.is_finite())
    }

    pub fn is_stalled(&self, input: &ControlInput, p: &AircraftParams, env: &Environment) -> bool {
        forces(self, input, p, env).stalled
    }

    /// Telemetry view of the state.
    pub fn observe(&self, input: &ControlInput, p: &AircraftParams, env: &Environment, t: f64) -> FlightState {
        let f = forces(self, input, p, env);
        let w = p.weight_n();
        FlightState {
            t,
            altitude_ft: self.h_m / FT_TO_M,
            pitch_deg: wrap_signed_deg(self.theta.to_degrees()),
            bank_deg: wrap_signed_deg(self.phi.to_degrees()),
            heading_deg: wrap_heading_deg(self.psi.to_degrees()),
            ias_kt: self.v_ms / KT_TO_MS,
            gs_kt: self.v_ms * self.gamma.cos() / KT_TO_MS,
            vs_fpm: (self.v_ms * self.gamma.sin() + env.vertical_wind_mps) * MS_TO_FPM,
            accel_lon_g: (f.thrust - f.drag) / w,
            accel_lat_g: env.gust_side_g,
            accel_vert_g: f.lift / w,
        }
    }

    /// Reconstructs the integrated state from telemetry. The flight-path
    /// angle comes from vertical speed over airspeed.
    pub fn from_flight_state(s: &FlightState) -> AircraftState {
        let v = s.ias_kt * KT_TO_MS;
        let vs = s.vs_fpm / MS_TO_FPM;
        let gamma = if v > 0.0 { (vs / v).clamp(-1.0, 1.0).asin() } else { 0.0 };
        AircraftState {
            h_m: s.altitude_ft * FT_TO_M,
            v_ms: v,
            gamma,
            theta: s.pitch_deg.to_radians(),
            phi: s.bank_deg.to_radians(),
            psi: s.heading_deg.to_radians(),
        }
    }
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub state: AircraftState,
    /// Angle of attack exceeded the stall angle during the step.
    pub stalled: bool,
}

/// One RK4 step of length `dt`, inputs held constant.
pub fn integrate(
    s: &AircraftState,
    input: &ControlInput,
    p: &AircraftParams,
    env: &Environment,
    dt: f64,
) -> Result<StepResult, SimError> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(SimError::InvalidStep(dt));
    }
    let k1 = derivative(s, input, p, env);
    let k2 = derivative(&s.add(&k1, dt / 2.0), input, p, env);
    let k3 = derivative(&s.add(&k2, dt / 2.0), input, p, env);
    let k4 = derivative(&s.add(&k3, dt), input, p, env);
    let mut k = [0.0; 6];
    for i in 0..6 {
        k[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    let mut next = s.add(&k, dt);
    next.psi = next.psi.rem_euclid(std::f64::consts::TAU);
    if !next.is_finite() || next.v_ms <= 0.0 {
        return Err(SimError::NonFiniteState);
    }
    let stalled = forces(s, input, p, env).stalled || forces(&next, input, p, env).stalled;
    Ok(StepResult { state: next, stalled })
}

/// Internal substep rate.
pub const SUBSTEP_HZ: u32 = 20;

/// Advances a telemetry state by `dt` seconds using 20 Hz RK4 substeps.
/// Returns the new state and whether a stall occurred.
pub fn step(
    state: &FlightState,
    input: &ControlInput,
    params: &AircraftParams,
    env: &Environment,
    dt: f64,
) -> Result<(FlightState, bool), SimError> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(SimError::InvalidStep(dt));
    }
    let n = (dt * f64::from(SUBSTEP_HZ)).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut s = AircraftState::from_flight_state(state);
    let mut stalled = false;
    for _ in 0..n {
        let r = integrate(&s, input, params, env, h)?;
        s = r.state;
        stalled |= r.stalled;
    }
    Ok((s.observe(input, params, env, state.t + dt).normalized()?, stalled))
}

/// Trimmed wings-level, constant-altitude state at `ias_kt`.
pub fn trim_level(
    ias_kt: f64,
    altitude_ft: f64,
    params: &AircraftParams,
) -> Result<(AircraftState, ControlInput), SimError> {
    params.validate()?;
    if !(ias_kt >= 1.2 * params.stall_ias_kt && ias_kt <= params.max_ias_kt) {
        return Err(SimError::TrimNotFound(format!(
            "{ias_kt} kt outside [{:.1}, {}] kt",
            1.2 * params.stall_ias_kt,
            params.max_ias_kt
        )));
    }
    let v = ias_kt * KT_TO_MS;
    let qs = 0.5 * RHO * v * v * params.wing_area_m2;
    // level flight: lift balances weight, thrust balances drag
    let cl = params.weight_n() / qs;
    let alpha = cl / params.lift_slope_per_rad;
    let throttle = qs * (params.k0 + params.k1 * cl * cl) / params.max_thrust_n;
    if alpha >= params.alpha_max_rad() || throttle > 1.0 {
        return Err(SimError::TrimNotFound(format!("no equilibrium at {ias_kt} kt")));
    }
    let state = AircraftState { h_m: altitude_ft * FT_TO_M, v_ms: v, gamma: 0.0, theta: alpha, phi: 0.0, psi: 0.0 };
    Ok((state, ControlInput { stick_x: 0.0, stick_y: 0.0, throttle }))
}

/// Trim in a steady descent or climb at `gamma` with the given throttle,
/// used for glides. Returns the pitch attitude for that path.
pub fn trim_pitch_for_path(ias_kt: f64, gamma: f64, params: &AircraftParams) -> f64 {
    let v = ias_kt * KT_TO_MS;
    let qs = 0.5 * RHO * v * v * params.wing_area_m2;
    let cl = params.weight_n() * gamma.cos() / qs;
    gamma + cl / params.lift_slope_per_rad
}
