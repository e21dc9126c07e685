use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::model::{AircraftParams, Environment};
use super::SimError;
use crate::flight_state::ControlInput;
use crate::task_standards::{TaskId, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightCondition {
    Normal,
    Abnormal,
}

impl fmt::Display for FlightCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlightCondition::Normal => "normal",
            FlightCondition::Abnormal => "abnormal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceKind {
    /// Rolls the aircraft and pushes it sideways.
    LateralGust {
        roll_rate_dps: f64,
        #[serde(default)]
        side_g: f64,
    },
    Updraft {
        vertical_mps: f64,
    },
    /// Scales available thrust.
    ThrottleDecay {
        factor: f64,
    },
    /// Constant offset added to the trainee's stick.
    ControlBias {
        #[serde(default)]
        stick_x: f64,
        #[serde(default)]
        stick_y: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(flatten)]
    pub kind: DisturbanceKind,
}

impl Disturbance {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start_s && t < self.start_s + self.duration_s
    }
}

/// Where the aircraft starts. Attitude and throttle come from trim at this
/// airspeed; `vs_fpm` sets the initial flight path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub altitude_ft: f64,
    pub ias_kt: f64,
    pub heading_deg: f64,
    #[serde(default)]
    pub bank_deg: f64,
    #[serde(default)]
    pub vs_fpm: f64,
    /// Starting throttle; defaults to the level-flight trim value.
    #[serde(default)]
    pub throttle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub task_id: TaskId,
    /// Fly the mirror image of the task (left instead of right turns).
    #[serde(default)]
    pub mirrored: bool,
    pub condition: FlightCondition,
    pub initial: InitialConditions,
    #[serde(default)]
    pub engine_failed: bool,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    pub duration_s: u64,
    #[serde(default)]
    pub params: Option<AircraftParams>,
}

const BUILTIN: [(&str, &str); 8] = [
    ("straight_level_normal", include_str!("../../resources/scenarios/straight_level_normal.json")),
    ("straight_level_abnormal", include_str!("../../resources/scenarios/straight_level_abnormal.json")),
    ("takeoff_climb_normal", include_str!("../../resources/scenarios/takeoff_climb_normal.json")),
    ("takeoff_climb_abnormal", include_str!("../../resources/scenarios/takeoff_climb_abnormal.json")),
    ("steep_turn_normal", include_str!("../../resources/scenarios/steep_turn_normal.json")),
    ("steep_turn_abnormal", include_str!("../../resources/scenarios/steep_turn_abnormal.json")),
    ("deadstick_landing_normal", include_str!("../../resources/scenarios/deadstick_landing_normal.json")),
    ("deadstick_landing_abnormal", include_str!("../../resources/scenarios/deadstick_landing_abnormal.json")),
];

impl Scenario {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn builtin(name: &str) -> Result<Scenario, SimError> {
        let (_, text) =
            BUILTIN.iter().find(|(n, _)| *n == name).ok_or_else(|| SimError::UnknownScenario(name.to_string()))?;
        Scenario::from_json(text)
    }

    /// The built-in scenario for a task and condition.
    pub fn for_task(task: TaskId, condition: FlightCondition) -> Scenario {
        Scenario::builtin(&format!("{}_{}", task.as_str(), condition)).expect("builtin scenarios parse")
    }

    /// All built-in scenarios, normal first.
    pub fn all_builtin() -> Vec<Scenario> {
        let mut v: Vec<Scenario> = Scenario::builtin_names().map(|n| Scenario::builtin(n).expect("builtin")).collect();
        v.sort_by_key(|s| s.condition == FlightCondition::Abnormal);
        v
    }

    pub fn from_json(text: &str) -> Result<Scenario, SimError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Scenario, SimError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(format!("{}: {m}", self.name)));
        match self.condition {
            FlightCondition::Normal if !self.disturbances.is_empty() => bad("normal scenarios have no disturbances"),
            FlightCondition::Abnormal if self.disturbances.is_empty() => bad("abnormal scenarios need a disturbance"),
            _ if self.duration_s == 0 => bad("duration must be positive"),
            _ if self.disturbances.iter().any(|d| d.duration_s <= 0.0 || d.start_s < 0.0) => {
                bad("disturbance windows must be non-empty")
            }
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> AircraftParams {
        self.params.unwrap_or_default()
    }

    /// Task spec the scenario is flown against.
    pub fn task_spec(&self) -> TaskSpec {
        let spec = TaskSpec::builtin(self.task_id);
        if self.mirrored {
            spec.mirrored()
        } else {
            spec
        }
    }

    pub fn environment_at(&self, t: f64) -> Environment {
        let mut env = Environment::calm();
        if self.engine_failed {
            env.thrust_factor = 0.0;
        }
        for d in self.disturbances.iter().filter(|d| d.active_at(t)) {
            match d.kind {
                DisturbanceKind::LateralGust { roll_rate_dps, side_g } => {
                    env.gust_roll_rate_dps += roll_rate_dps;
                    env.gust_side_g += side_g;
                }
                DisturbanceKind::Updraft { vertical_mps } => env.vertical_wind_mps += vertical_mps,
                DisturbanceKind::ThrottleDecay { factor } => env.thrust_factor *= factor,
                DisturbanceKind::ControlBias { .. } => {}
            }
        }
        env
    }

    pub fn control_bias_at(&self, t: f64) -> ControlInput {
        let mut bias = ControlInput { stick_x: 0.0, stick_y: 0.0, throttle: 0.0 };
        for d in self.disturbances.iter().filter(|d| d.active_at(t)) {
            if let DisturbanceKind::ControlBias { stick_x, stick_y } = d.kind {
                bias.stick_x += stick_x;
                bias.stick_y += stick_y;
            }
        }
        bias
    }

    pub fn disturbed_at(&self, t: f64) -> bool {
        self.disturbances.iter().any(|d| d.active_at(t))
    }
}

impl FromStr for FlightCondition {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(FlightCondition::Normal),
            "abnormal" => Ok(FlightCondition::Abnormal),
            other => Err(SimError::InvalidScenario(format!("unknown condition {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_respect_condition_invariant() {
        let all = Scenario::all_builtin();
        assert_eq!(all.len(), 8);
        for s in &all {
            match s.condition {
                FlightCondition::Normal => assert!(s.disturbances.is_empty()),
                FlightCondition::Abnormal => assert!(!s.disturbances.is_empty()),
            }
        }
        for task in TaskId::ALL {
            for c in [FlightCondition::Normal, FlightCondition::Abnormal] {
                let s = Scenario::for_task(task, c);
                assert_eq!((s.task_id, s.condition), (task, c));
            }
        }
    }

    #[test]
    fn normal_with_disturbance_is_rejected() {
        let mut s = Scenario::for_task(TaskId::StraightLevel, FlightCondition::Abnormal);
        s.condition = FlightCondition::Normal;
        assert!(s.validate().is_err());
    }

    #[test]
    fn environment_combines_active_disturbances() {
        let s = Scenario::for_task(TaskId::DeadstickLanding, FlightCondition::Normal);
        assert_eq!(s.environment_at(5.0).thrust_factor, 0.0);
        let text = r#"{"name":"x","task_id":"straight_level","condition":"abnormal",
            "initial":{"altitude_ft":4500,"ias_kt":110,"heading_deg":90},
            "disturbances":[{"start_s":10,"duration_s":5,"kind":"updraft","vertical_mps":3},
                            {"start_s":12,"duration_s":5,"kind":"control_bias","stick_x":0.1}],
            "duration_s":30}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.environment_at(9.9).vertical_wind_mps, 0.0);
        assert_eq!(s.environment_at(10.0).vertical_wind_mps, 3.0);
        assert_eq!(s.control_bias_at(13.0).stick_x, 0.1);
        assert!(!s.disturbed_at(17.0));
    }
}
