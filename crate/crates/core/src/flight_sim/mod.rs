//! Desk-scale flight model, scenarios and a synthetic trainee, used in
//! place of a full simulator for closed-loop runs.

mod model;
mod run;
mod scenario;
mod trainee;

use thiserror::Error;

pub use model::{
    integrate, step, trim_level, trim_pitch_for_path, AircraftParams, AircraftState, Environment, StepResult, G,
    KT_TO_MS, SUBSTEP_HZ,
};
pub use run::{run_scenario, Assistant, ControlSample, ScenarioRun, ScenarioSim, TickOutput};
pub use scenario::{Disturbance, DisturbanceKind, FlightCondition, InitialConditions, Scenario};
pub use trainee::{blend_nudge, trainee_step, ControlGains, Trainee, TraineeSkill};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("integration produced a non-finite state")]
    NonFiniteState,
    #[error("step length {0} s outside (0, 1]")]
    InvalidStep(f64),
    #[error("trim not found: {0}")]
    TrimNotFound(String),
    #[error("invalid aircraft parameters")]
    InvalidParams,
    #[error("invalid trainee skill: {0}")]
    InvalidSkill(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
}

impl From<crate::flight_state::FlightStateError> for SimError {
    fn from(_: crate::flight_state::FlightStateError) -> Self {
        SimError::NonFiniteState
    }
}
