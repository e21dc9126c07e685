//! Flight tasks as phased target envelopes.
//!
//! A [`TaskSpec`] is data: the four built-in tasks ship as JSON resources and
//! any spec can be loaded from a file with the same schema. Evaluation
//! against a spec lives in [`evaluate`], the phase machine in [`phase`].

mod evaluate;
mod phase;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight_state::{FlightState, Metric};
use crate::stick::StickOp;

pub use evaluate::{evaluate, metric_priority, DeviationReport, MetricDeviation};
pub use phase::{advance_phase, PhaseContext, PhaseCursor, PhaseTracker, PhaseTransition};

#[derive(Debug, Error)]
pub enum StandardsError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid task spec file: {0}")]
    InvalidSpecFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    StraightLevel,
    TakeoffClimb,
    SteepTurn,
    DeadstickLanding,
}

impl TaskId {
    pub const ALL: [TaskId; 4] =
        [TaskId::StraightLevel, TaskId::TakeoffClimb, TaskId::SteepTurn, TaskId::DeadstickLanding];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::StraightLevel => "straight_level",
            TaskId::TakeoffClimb => "takeoff_climb",
            TaskId::SteepTurn => "steep_turn",
            TaskId::DeadstickLanding => "deadstick_landing",
        }
    }

    /// Name used in retrieval queries and reports.
    pub fn display_name(self) -> &'static str {
        match self {
            TaskId::StraightLevel => "straight and level flight",
            TaskId::TakeoffClimb => "normal takeoff and climb",
            TaskId::SteepTurn => "steep turn",
            TaskId::DeadstickLanding => "deadstick landing",
        }
    }

    fn builtin_json(self) -> &'static str {
        match self {
            TaskId::StraightLevel => include_str!("../../resources/tasks/straight_level.json"),
            TaskId::TakeoffClimb => include_str!("../../resources/tasks/takeoff_climb.json"),
            TaskId::SteepTurn => include_str!("../../resources/tasks/steep_turn.json"),
            TaskId::DeadstickLanding => {
                include_str!("../../resources/tasks/deadstick_landing.json")
            }
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = StandardsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL.iter().copied().find(|t| t.as_str() == s).ok_or_else(|| StandardsError::UnknownTask(s.to_string()))
    }
}

/// Target value with a symmetric tolerance band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEnvelope {
    pub metric: Metric,
    pub target: f64,
    pub tolerance: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// Predicate used for phase entry and task completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Always,
    AbsBankAtLeast(f64),
    AbsBankAtMost(f64),
    AltitudeAtLeast(f64),
    AltitudeAtMost(f64),
    IasAtLeast(f64),
    /// Absolute heading change accumulated since the task started.
    HeadingTurnedAtLeast(f64),
    TimeInPhaseAtLeast(f64),
    All(Vec<Condition>),
    Any(Vec<Condition>),
}

impl Condition {
    pub fn holds(&self, ctx: &PhaseContext<'_>) -> bool {
        let s = ctx.state;
        match self {
            Condition::Always => true,
            Condition::AbsBankAtLeast(v) => s.bank_deg.abs() >= *v,
            Condition::AbsBankAtMost(v) => s.bank_deg.abs() <= *v,
            Condition::AltitudeAtLeast(v) => s.altitude_ft >= *v,
            Condition::AltitudeAtMost(v) => s.altitude_ft <= *v,
            Condition::IasAtLeast(v) => s.ias_kt >= *v,
            Condition::HeadingTurnedAtLeast(v) => ctx.heading_turned_deg >= *v,
            Condition::TimeInPhaseAtLeast(v) => ctx.time_in_phase_s >= *v,
            Condition::All(cs) => cs.iter().all(|c| c.holds(ctx)),
            Condition::Any(cs) => cs.iter().any(|c| c.holds(ctx)),
        }
    }

    fn mirrored(&self) -> Condition {
        match self {
            Condition::All(cs) => Condition::All(cs.iter().map(Condition::mirrored).collect()),
            Condition::Any(cs) => Condition::Any(cs.iter().map(Condition::mirrored).collect()),
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub name: String,
    pub entry: Condition,
    pub envelopes: Vec<MetricEnvelope>,
    /// Stick motion that starts this phase; fired as a pre-start cue on entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stick_tendency: Option<StickOp>,
}

impl PhaseSpec {
    pub fn envelope(&self, metric: Metric) -> Option<&MetricEnvelope> {
        self.envelopes.iter().find(|e| e.metric == metric)
    }

    pub fn target(&self, metric: Metric) -> Option<f64> {
        self.envelope(metric).map(|e| e.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub task_id: TaskId,
    pub title: String,
    pub phases: Vec<PhaseSpec>,
    /// Evaluated while in the last phase; when it holds the task is complete.
    pub completion: Condition,
    /// Consecutive ticks of growing |deviation| that raise a trend flag.
    #[serde(default = "default_trend_ticks")]
    pub trend_ticks: usize,
    /// Number of recent states kept for trend detection.
    #[serde(default = "default_history_len")]
    pub history_len: usize,
}

fn default_version() -> u32 {
    1
}
fn default_trend_ticks() -> usize {
    3
}
fn default_history_len() -> usize {
    5
}

impl TaskSpec {
    pub fn builtin(task: TaskId) -> TaskSpec {
        let spec: TaskSpec = serde_json::from_str(task.builtin_json()).expect("built-in task spec parses");
        spec.validate().expect("built-in task spec is valid");
        spec
    }

    pub fn from_json(text: &str) -> Result<TaskSpec, StandardsError> {
        let spec: TaskSpec = serde_json::from_str(text).map_err(|e| StandardsError::InvalidSpecFile(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<TaskSpec, StandardsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StandardsError::InvalidSpecFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), StandardsError> {
        let bad = |m: String| Err(StandardsError::InvalidSpecFile(m));
        if self.phases.is_empty() {
            return bad("a task needs at least one phase".into());
        }
        if self.trend_ticks < 2 || self.history_len + 1 < self.trend_ticks {
            return bad("trend_ticks must be >= 2 and fit in the history window".into());
        }
        for (i, phase) in self.phases.iter().enumerate() {
            if self.phases[..i].iter().any(|p| p.name == phase.name) {
                return bad(format!("duplicate phase name `{}`", phase.name));
            }
            for env in &phase.envelopes {
                if !(env.tolerance > 0.0 && env.tolerance.is_finite()) {
                    return bad(format!("{}: tolerance for {} must be > 0", phase.name, env.metric));
                }
                if !env.target.is_finite() || !(env.weight > 0.0 && env.weight.is_finite()) {
                    return bad(format!("{}: bad target or weight for {}", phase.name, env.metric));
                }
                if phase.envelopes.iter().filter(|e| e.metric == env.metric).count() > 1 {
                    return bad(format!("{}: duplicate envelope for {}", phase.name, env.metric));
                }
            }
        }
        Ok(())
    }

    pub fn phase_index(&self, name: &str) -> Option<usize> {
        self.phases.iter().position(|p| p.name == name)
    }

    /// Left/right mirror: bank targets and roll tendencies change sign.
    pub fn mirrored(&self) -> TaskSpec {
        let mut out = self.clone();
        for phase in &mut out.phases {
            phase.entry = phase.entry.mirrored();
            for env in &mut phase.envelopes {
                if env.metric == Metric::Bank {
                    env.target = -env.target;
                }
            }
            phase.stick_tendency = phase.stick_tendency.map(StickOp::mirrored);
        }
        out.title = match out.title.strip_suffix(" (right)") {
            Some(stem) => format!("{stem} (left)"),
            None => format!("{} (mirrored)", out.title),
        };
        out
    }
}

/// Loads the built-in spec for a task name.
pub fn load_task_spec(task: &str) -> Result<TaskSpec, StandardsError> {
    Ok(TaskSpec::builtin(task.parse()?))
}

/// Phase state needed to fly or evaluate a phase, derived from its envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTargets {
    pub altitude_ft: Option<f64>,
    pub bank_deg: Option<f64>,
    pub heading_deg: Option<f64>,
    pub ias_kt: Option<f64>,
    pub vs_fpm: Option<f64>,
}

impl PhaseTargets {
    pub fn of(phase: &PhaseSpec) -> PhaseTargets {
        PhaseTargets {
            altitude_ft: phase.target(Metric::Altitude),
            bank_deg: phase.target(Metric::Bank),
            heading_deg: phase.target(Metric::Heading),
            ias_kt: phase.target(Metric::Ias),
            vs_fpm: phase.target(Metric::Vs),
        }
    }
}

/// Convenience: a state exactly on every target of a phase.
pub fn state_on_targets(phase: &PhaseSpec, base: FlightState) -> FlightState {
    let mut s = base;
    for env in &phase.envelopes {
        s.set(env.metric, env.target);
    }
    s
}
