use serde::{Deserialize, Serialize};

use super::TaskSpec;
use crate::flight_state::{heading_delta_deg, FlightState};

/// Inputs to phase predicates.
#[derive(Debug, Clone, Copy)]
pub struct PhaseContext<'a> {
    pub state: &'a FlightState,
    pub time_in_phase_s: f64,
    pub heading_turned_deg: f64,
}

/// Position in the phase sequence. `index == None` means the task has not
/// started yet (first phase entry not seen).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseCursor {
    pub index: Option<usize>,
    pub entered_tick: u64,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseTransition {
    Stay,
    Advance { index: usize, name: String },
    Complete,
}

/// Decides the transition for one tick. Never skips a phase and never
/// moves backwards; completion is only checked in the last phase.
pub fn advance_phase(
    tick: u64,
    state: &FlightState,
    spec: &TaskSpec,
    cursor: &PhaseCursor,
    heading_turned_deg: f64,
) -> PhaseTransition {
    if cursor.completed {
        return PhaseTransition::Stay;
    }
    let next = cursor.index.map_or(0, |i| i + 1);
    let time_in_phase_s = cursor.index.map_or(0.0, |_| tick.saturating_sub(cursor.entered_tick) as f64);
    let ctx = PhaseContext { state, time_in_phase_s, heading_turned_deg };
    if next < spec.phases.len() {
        if spec.phases[next].entry.holds(&ctx) {
            return PhaseTransition::Advance { index: next, name: spec.phases[next].name.clone() };
        }
    } else if spec.completion.holds(&ctx) {
        return PhaseTransition::Complete;
    }
    PhaseTransition::Stay
}

/// Stateful wrapper around [`advance_phase`] that also accumulates the
/// heading change since the task started.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTracker {
    cursor: PhaseCursor,
    heading_turned_deg: f64,
    last_heading: Option<f64>,
    completed_tick: Option<u64>,
    started_tick: Option<u64>,
}

impl PhaseTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, tick: u64, state: &FlightState, spec: &TaskSpec) -> PhaseTransition {
        if self.cursor.index.is_some() {
            if let Some(last) = self.last_heading {
                self.heading_turned_deg += heading_delta_deg(state.heading_deg, last);
            }
            self.last_heading = Some(state.heading_deg);
        }
        let transition = advance_phase(tick, state, spec, &self.cursor, self.heading_turned_deg.abs());
        match &transition {
            PhaseTransition::Advance { index, .. } => {
                if self.cursor.index.is_none() {
                    self.started_tick = Some(tick);
                    self.last_heading = Some(state.heading_deg);
                    self.heading_turned_deg = 0.0;
                }
                self.cursor.index = Some(*index);
                self.cursor.entered_tick = tick;
            }
            PhaseTransition::Complete => {
                self.cursor.completed = true;
                self.completed_tick = Some(tick);
            }
            PhaseTransition::Stay => {}
        }
        transition
    }

    /// Phase whose envelopes apply; the first phase before the task starts.
    pub fn phase_index(&self) -> usize {
        self.cursor.index.unwrap_or(0)
    }

    pub fn cursor(&self) -> PhaseCursor {
        self.cursor
    }

    pub fn is_complete(&self) -> bool {
        self.cursor.completed
    }

    pub fn started_tick(&self) -> Option<u64> {
        self.started_tick
    }

    pub fn completed_tick(&self) -> Option<u64> {
        self.completed_tick
    }

    pub fn heading_turned_deg(&self) -> f64 {
        self.heading_turned_deg.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_standards::TaskId;

    fn s(bank: f64, heading: f64) -> FlightState {
        FlightState { bank_deg: bank, heading_deg: heading, altitude_ft: 4500.0, ..FlightState::default() }
    }

    #[test]
    fn roll_in_advances_to_hold_at_40_degrees() {
        let spec = TaskSpec::builtin(TaskId::SteepTurn);
        let cursor = PhaseCursor { index: Some(0), entered_tick: 1, completed: false };
        assert_eq!(
            advance_phase(4, &s(44.0, 95.0), &spec, &cursor, 5.0),
            PhaseTransition::Advance { index: 1, name: "hold_45".into() }
        );
        assert_eq!(advance_phase(4, &s(20.0, 95.0), &spec, &cursor, 5.0), PhaseTransition::Stay);
    }

    #[test]
    fn last_phase_completion() {
        let spec = TaskSpec::builtin(TaskId::SteepTurn);
        let cursor = PhaseCursor { index: Some(2), entered_tick: 40, completed: false };
        assert_eq!(advance_phase(43, &s(3.0, 88.0), &spec, &cursor, 358.0), PhaseTransition::Complete);
        let done = PhaseCursor { completed: true, ..cursor };
        assert_eq!(advance_phase(44, &s(3.0, 88.0), &spec, &done, 358.0), PhaseTransition::Stay);
    }

    #[test]
    fn tracker_walks_a_full_steep_turn() {
        let spec = TaskSpec::builtin(TaskId::SteepTurn);
        let mut tr = PhaseTracker::new();
        let mut tick = 0;
        let mut step = |tr: &mut PhaseTracker, st: FlightState| {
            tick += 1;
            tr.update(tick, &st, &spec)
        };
        assert!(matches!(step(&mut tr, s(0.0, 90.0)), PhaseTransition::Advance { index: 0, .. }));
        assert_eq!(step(&mut tr, s(20.0, 92.0)), PhaseTransition::Stay);
        assert!(matches!(step(&mut tr, s(42.0, 96.0)), PhaseTransition::Advance { index: 1, .. }));
        let mut hdg = 96.0;
        let mut saw_roll_out = false;
        for _ in 0..40 {
            hdg = (hdg + 9.0) % 360.0;
            if let PhaseTransition::Advance { index, .. } = step(&mut tr, s(45.0, hdg)) {
                assert_eq!(index, 2);
                saw_roll_out = true;
                break;
            }
        }
        assert!(saw_roll_out);
        assert!(tr.heading_turned_deg() >= 335.0);
        assert_eq!(step(&mut tr, s(2.0, 88.0)), PhaseTransition::Complete);
        assert!(tr.is_complete());
        assert_eq!(step(&mut tr, s(0.0, 90.0)), PhaseTransition::Stay);
    }

    #[test]
    fn tracker_never_skips_phases() {
        // a state satisfying every entry condition still advances one phase per tick
        let spec = TaskSpec::builtin(TaskId::DeadstickLanding);
        let mut tr = PhaseTracker::new();
        let ground = FlightState { altitude_ft: 0.0, ..FlightState::default() };
        let mut seen = vec![];
        for tick in 1..=5 {
            seen.push(tr.update(tick, &ground, &spec));
        }
        let idx: Vec<_> = seen
            .iter()
            .filter_map(|t| match t {
                PhaseTransition::Advance { index, .. } => Some(*index),
                _ => None,
            })
            .collect();
        assert_eq!(idx, [0, 1, 2]);
        assert_eq!(seen[3], PhaseTransition::Complete);
    }
}
