//! The 1 Hz loop: telemetry in, standards, guidance chain, gated EMS
//! commands and voice events out, one record per tick.

mod batch;
mod engine;
pub mod gateway;
mod log;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ems::{CalibrationProfile, DeviceError, EmsCommand, RejectReason};
use crate::flight_sim::{ControlSample, FlightCondition, SimError, TraineeSkill};
use crate::flight_state::{FlightState, FlightStateError};
use crate::guidance::{ChainRecord, Instrument, PhaseEntry, ValidatorVerdict};
use crate::knowledge_base::KbError;
use crate::task_standards::{DeviationReport, TaskId, TaskSpec};

pub use batch::{build_pipeline, run_session, scenario_for, SessionOutput};
pub use engine::{connect_device, SessionEngine};
pub use log::{
    read_log, read_log_file, replay, LogHeader, Mismatch, ReplayReport, ScenarioMeta, SessionLog, LOG_SCHEMA,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    DeviceUnavailable(#[from] DeviceError),
    #[error("address {0} already in use")]
    PortInUse(String),
    #[error("telemetry source exhausted")]
    SourceExhausted,
    #[error("tick {got} does not follow {expected}")]
    TickOutOfOrder { expected: u64, got: u64 },
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Telemetry(#[from] FlightStateError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    Oracle {
        #[serde(default)]
        delay_ms: u64,
    },
    Remote {
        base_url: String,
        model: String,
        /// Environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

impl Default for BackendChoice {
    fn default() -> Self {
        BackendChoice::Oracle { delay_ms: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub task: TaskId,
    pub condition: FlightCondition,
    /// Scenario file; the built-in one for task and condition otherwise.
    pub scenario_path: Option<PathBuf>,
    /// JSON-lines telemetry to analyze instead of flying a scenario.
    pub telemetry_path: Option<PathBuf>,
    pub backend: BackendChoice,
    pub assist: bool,
    pub seed: u64,
    pub skill: TraineeSkill,
    /// Calibration profile file; the demo profile otherwise.
    pub profile_path: Option<PathBuf>,
    pub deadline_ms: u64,
    /// Stimulator socket. Without one, frames go to an in-process
    /// simulated device.
    pub device_addr: Option<String>,
    /// Prebuilt index file; the bundled corpus otherwise.
    pub kb_index: Option<PathBuf>,
    /// Task spec file replacing the built-in envelopes for `task`.
    pub task_spec_path: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            task: TaskId::SteepTurn,
            condition: FlightCondition::Normal,
            scenario_path: None,
            telemetry_path: None,
            backend: BackendChoice::default(),
            assist: true,
            seed: 0,
            skill: TraineeSkill::novice(),
            profile_path: None,
            deadline_ms: 800,
            device_addr: None,
            kb_index: None,
            task_spec_path: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.deadline_ms == 0 || self.deadline_ms >= 1000 {
            return Err(SessionError::ConfigInvalid(format!("deadline_ms {} must be in 1..1000", self.deadline_ms)));
        }
        self.skill.validate().map_err(|e| SessionError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }

    /// The task spec file if one is set, else `builtin`.
    pub fn task_spec(&self, builtin: TaskSpec) -> Result<TaskSpec, SessionError> {
        let Some(p) = &self.task_spec_path else {
            return Ok(builtin);
        };
        let spec = TaskSpec::from_file(p).map_err(|e| SessionError::ConfigInvalid(e.to_string()))?;
        if spec.task_id != self.task {
            return Err(SessionError::ConfigInvalid(format!("{} is a {} spec", p.display(), spec.task_id)));
        }
        Ok(spec)
    }

    pub fn load_profile(&self) -> Result<CalibrationProfile, SessionError> {
        let profile = match &self.profile_path {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(|e| SessionError::ConfigInvalid(format!("{}: {e}", p.display())))?,
            None => CalibrationProfile::demo(),
        };
        profile.validate().map_err(|e| SessionError::ConfigInvalid(e.to_string()))?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiceEvent {
    pub tick: u64,
    pub instrument: Instrument,
    pub template: String,
    pub text: String,
}

pub const VOICE_TEMPLATE: &str = "check_instrument.v1";

impl VoiceEvent {
    pub fn check(tick: u64, instrument: Instrument) -> Self {
        VoiceEvent { tick, instrument, template: VOICE_TEMPLATE.into(), text: format!("Check the {instrument}.") }
    }
}

/// Combined output of one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub tick: u64,
    pub state: FlightState,
    /// Controls flown during the tick, when the session drives the sim.
    pub control: Option<ControlSample>,
    pub phase_entry: Option<PhaseEntry>,
    pub task_complete: bool,
    pub report: DeviationReport,
    pub chain: ChainRecord,
    pub verdict: ValidatorVerdict,
    /// Chain finished after the wall-clock deadline; outputs dropped.
    pub late: bool,
    pub commands: Vec<EmsCommand>,
    pub rejected: Vec<RejectReason>,
    pub voice: Vec<VoiceEvent>,
    pub device_error: Option<String>,
}
