//! Status check, guidance and formatting stages behind a pluggable model
//! backend, plus the record validator.

mod backend;
mod oracle;
mod pipeline;
mod schema;
mod validator;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ems::{EmsMode, Trigger};
use crate::flight_state::{FlightState, Metric};
use crate::stick::{Axis, StickOp};
use crate::task_standards::{DeviationReport, TaskId};

pub use backend::{Backend, BackendRequest, BackendResponse, OracleBackend, RemoteBackend};
pub use oracle::{oracle_guidance, oracle_packet, oracle_status};
pub use pipeline::{AlignRecord, ChainRecord, Pipeline, PipelineConfig, StageRecord};
pub use schema::{schema_for, validate_payload};
pub use validator::{validate_record, Criterion, ValidatorVerdict};

/// Worst severity at or above which the status is critical.
pub const CRITICAL_SEVERITY: f64 = 3.0;
/// Correction severity at or above which the cue is firm.
pub const FIRM_SEVERITY: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    StatusCheck,
    Guidance,
    Format,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::StatusCheck, Stage::Guidance, Stage::Format];

    pub fn id(self) -> &'static str {
        match self {
            Stage::StatusCheck => "status_check",
            Stage::Guidance => "guidance",
            Stage::Format => "format",
        }
    }

    pub fn prompt_id(self) -> &'static str {
        match self {
            Stage::StatusCheck => "status_check.v1",
            Stage::Guidance => "guidance.v1",
            Stage::Format => "format.v1",
        }
    }

    pub fn schema_id(self) -> &'static str {
        match self {
            Stage::StatusCheck => "status_check.v1",
            Stage::Guidance => "guidance.v1",
            Stage::Format => "packet.v1",
        }
    }

    pub fn prompt_template(self) -> &'static str {
        match self {
            Stage::StatusCheck => include_str!("../../resources/prompts/status_check.v1.md"),
            Stage::Guidance => include_str!("../../resources/prompts/guidance.v1.md"),
            Stage::Format => include_str!("../../resources/prompts/format.v1.md"),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GuidanceError {
    #[error("{stage} exceeded the {deadline_ms} ms deadline")]
    BackendTimeout { stage: Stage, deadline_ms: u64 },
    #[error("{stage} response malformed: {reason}")]
    MalformedResponse { stage: Stage, reason: String },
    #[error("backend unavailable: {reason}")]
    ProviderUnavailable { reason: String },
    #[error("packet violates invariants: {reason}")]
    InvariantViolation { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Instrument {
    #[serde(rename = "altimeter")]
    Altimeter,
    #[serde(rename = "attitude indicator")]
    AttitudeIndicator,
    #[serde(rename = "airspeed indicator")]
    AirspeedIndicator,
    #[serde(rename = "heading indicator")]
    HeadingIndicator,
    #[serde(rename = "vertical speed indicator")]
    VerticalSpeedIndicator,
}

impl Instrument {
    pub const ALL: [Instrument; 5] = [
        Instrument::Altimeter,
        Instrument::AttitudeIndicator,
        Instrument::AirspeedIndicator,
        Instrument::HeadingIndicator,
        Instrument::VerticalSpeedIndicator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Instrument::Altimeter => "altimeter",
            Instrument::AttitudeIndicator => "attitude indicator",
            Instrument::AirspeedIndicator => "airspeed indicator",
            Instrument::HeadingIndicator => "heading indicator",
            Instrument::VerticalSpeedIndicator => "vertical speed indicator",
        }
    }

    /// Instrument that displays `metric`.
    pub fn for_metric(metric: Metric) -> Instrument {
        match metric {
            Metric::Altitude => Instrument::Altimeter,
            Metric::Bank | Metric::Pitch | Metric::AccelLat => Instrument::AttitudeIndicator,
            Metric::Heading => Instrument::HeadingIndicator,
            Metric::Ias | Metric::Gs | Metric::AccelLon => Instrument::AirspeedIndicator,
            Metric::Vs | Metric::AccelVert => Instrument::VerticalSpeedIndicator,
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stick axis that corrects `metric`. Airspeed and the accelerations have
/// none: they get a voice prompt only.
pub fn control_axis(metric: Metric) -> Option<Axis> {
    match metric {
        Metric::Bank | Metric::Heading => Some(Axis::X),
        Metric::Altitude | Metric::Pitch | Metric::Vs => Some(Axis::Y),
        Metric::Ias | Metric::Gs | Metric::AccelLon | Metric::AccelLat | Metric::AccelVert => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Nominal,
    Deviation,
    Critical,
}

impl Status {
    /// Status class implied by a deviation report.
    pub fn of_report(report: &DeviationReport) -> Status {
        match report.worst_deviation() {
            None => Status::Nominal,
            Some(d) if d.severity() >= CRITICAL_SEVERITY => Status::Critical,
            Some(_) => Status::Deviation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub metric: Metric,
    pub in_band: bool,
    pub deviation: f64,
    pub note: String,
}

/// Stage 1 output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusCheck {
    pub tick: u64,
    pub status: Status,
    pub worst_metric: Option<Metric>,
    pub assessments: Vec<Assessment>,
}

/// Stage 2 output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceNote {
    pub tick: u64,
    pub guidance: String,
    pub focus_metric: Option<Metric>,
}

/// Stage 3 output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidancePacket {
    pub tick: u64,
    pub trigger: Option<Trigger>,
    pub ems_mode: Option<EmsMode>,
    pub stick_op: Option<StickOp>,
    pub instruments: Vec<Instrument>,
    pub rationale: String,
    pub provenance: Vec<String>,
}

impl GuidancePacket {
    pub fn check_invariants(&self) -> Result<(), GuidanceError> {
        let bad = |m: &str| Err(GuidanceError::InvariantViolation { reason: m.to_string() });
        match self.trigger {
            Some(Trigger::PreStart) if self.ems_mode != Some(EmsMode::Swell) => bad("pre_start needs mode 3"),
            Some(Trigger::Correction) if self.ems_mode != Some(EmsMode::Rising) => bad("correction needs mode 2"),
            Some(Trigger::Correction) if self.instruments.is_empty() => bad("correction names no instrument"),
            Some(_) if self.stick_op.is_none() => bad("trigger without stick_op"),
            None if self.ems_mode.is_some() || self.stick_op.is_some() => bad("mode or stick_op without trigger"),
            _ => Ok(()),
        }
    }
}

/// Phase the aircraft entered on this tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub index: usize,
    pub name: String,
    /// Stick input the phase starts with, if any.
    pub tendency: Option<StickOp>,
}

/// Everything the chain sees for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineInput {
    pub tick: u64,
    pub task: TaskId,
    pub state: FlightState,
    pub report: DeviationReport,
    pub phase_entry: Option<PhaseEntry>,
}

impl PipelineInput {
    /// The pre-start cue this tick calls for, if any.
    pub fn pre_start_op(&self) -> Option<StickOp> {
        self.phase_entry.as_ref().and_then(|e| e.tendency)
    }
}
