//! Core of the kinetrain flight-skill coach.
//!
//! Telemetry comes in once per second as a [`FlightState`], is scored
//! against a [`TaskSpec`], passed through the three-stage guidance pipeline
//! and turned into EMS cues for the trainee's forearm.

pub mod ems;
pub mod eval;
pub mod flight_sim;
pub mod flight_state;
pub mod guidance;
pub mod knowledge_base;
pub mod session;
pub mod stick;
pub mod task_standards;

pub use flight_state::{ControlInput, FlightState, Metric, TelemetryRecord};
pub use stick::{Axis, Direction, MagnitudeClass, StickOp};
pub use task_standards::{DeviationReport, TaskId, TaskSpec};
