use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::flight_state::{heading_delta_deg, ControlInput, FlightState};
use crate::task_standards::{PhaseTargets, PhaseTracker, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraineeSkill {
    /// Multiplier on every control gain; 1 is a well-tuned pilot.
    pub gain_error: f64,
    pub reaction_delay_s: f64,
    /// Standard deviation of stick jitter.
    pub noise_sigma: f64,
    /// Fraction of an EMS nudge adopted into the stick.
    pub compliance: f64,
}

impl TraineeSkill {
    pub fn perfect() -> Self {
        TraineeSkill { gain_error: 1.0, reaction_delay_s: 0.0, noise_sigma: 0.0, compliance: 0.0 }
    }

    /// Default novice used by the evaluation runs.
    pub fn novice() -> Self {
        TraineeSkill { gain_error: 0.6, reaction_delay_s: 1.0, noise_sigma: 0.08, compliance: 0.5 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = (0.0..=1.0).contains(&self.compliance)
            && self.reaction_delay_s >= 0.0
            && self.noise_sigma >= 0.0
            && self.gain_error > 0.0
            && [self.gain_error, self.reaction_delay_s, self.noise_sigma].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidSkill(format!("{self:?}")))
        }
    }
}

/// Nominal control-law gains before `gain_error` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    /// Stick per degree of bank error.
    pub bank: f64,
    /// Degrees of bank per degree of heading error.
    pub heading_to_bank: f64,
    pub max_heading_bank_deg: f64,
    /// fpm of climb per foot of altitude error.
    pub altitude_to_vs: f64,
    pub max_vs_fpm: f64,
    /// Stick per fpm of vertical-speed error.
    pub vs: f64,
    /// Stick per degree of pitch error.
    pub pitch: f64,
    /// Degrees of pitch per knot of airspeed excess.
    pub speed_to_pitch: f64,
    /// Pitch reference drift, deg/s per knot.
    pub speed_to_pitch_rate: f64,
    /// Throttle per knot of airspeed deficit.
    pub throttle: f64,
    /// Throttle reference drift, per second per knot.
    pub throttle_rate: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        ControlGains {
            bank: 0.05,
            heading_to_bank: 1.0,
            max_heading_bank_deg: 20.0,
            altitude_to_vs: 3.0,
            max_vs_fpm: 800.0,
            vs: 0.0001,
            pitch: 0.15,
            speed_to_pitch: 0.4,
            speed_to_pitch_rate: 0.05,
            throttle: 0.03,
            throttle_rate: 0.004,
        }
    }
}

/// Slowly varying references carried between control updates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Refs {
    pitch_deg: f64,
    throttle: f64,
}

fn desired_bank(t: &PhaseTargets, s: &FlightState, g: &ControlGains, k: f64) -> f64 {
    match (t.bank_deg, t.heading_deg) {
        (Some(b), _) if b.abs() > 1.0 => b,
        (_, Some(h)) => {
            let lim = g.max_heading_bank_deg;
            (k * g.heading_to_bank * heading_delta_deg(h, s.heading_deg)).clamp(-lim, lim)
        }
        (Some(b), None) => b,
        (None, None) => 0.0,
    }
}

/// The control law. Pitch channel: altitude when there is an altitude
/// target, else airspeed on pitch, else vertical speed. Throttle holds
/// airspeed when altitude is also held, and is full when climbing on speed.
fn law(t: &PhaseTargets, s: &FlightState, refs: &Refs, g: &ControlGains, k: f64) -> ControlInput {
    let stick_x = k * g.bank * (desired_bank(t, s, g, k) - s.bank_deg);
    let stick_y = match (t.altitude_ft, t.ias_kt, t.vs_fpm) {
        (Some(alt), _, _) => {
            let vs_des = (k * g.altitude_to_vs * (alt - s.altitude_ft)).clamp(-g.max_vs_fpm, g.max_vs_fpm);
            k * g.vs * (vs_des - s.vs_fpm)
        }
        (None, Some(ias), _) => {
            let pitch_cmd = refs.pitch_deg + k * g.speed_to_pitch * (s.ias_kt - ias);
            k * g.pitch * (pitch_cmd - s.pitch_deg)
        }
        (None, None, Some(vs)) => k * g.vs * (vs - s.vs_fpm),
        (None, None, None) => k * g.vs * -s.vs_fpm,
    };
    let throttle = match (t.altitude_ft, t.ias_kt) {
        (Some(_), Some(ias)) => refs.throttle + k * g.throttle * (ias - s.ias_kt),
        (None, Some(_)) => 1.0,
        _ => refs.throttle,
    };
    ControlInput { stick_x, stick_y, throttle }.clamped()
}

/// Output after blending in an EMS nudge: own + compliance * nudge.
pub fn blend_nudge(own: ControlInput, nudge: Option<ControlInput>, compliance: f64) -> ControlInput {
    let Some(n) = nudge else { return own };
    let c = compliance.clamp(0.0, 1.0);
    ControlInput { stick_x: own.stick_x + c * n.stick_x, stick_y: own.stick_y + c * n.stick_y, throttle: own.throttle }
        .clamped()
}

/// Memoryless variant of the trainee: no delay, noise or integrators.
pub fn trainee_step(
    targets: &PhaseTargets,
    state: &FlightState,
    skill: &TraineeSkill,
    nudge: Option<ControlInput>,
) -> ControlInput {
    let refs = Refs { pitch_deg: state.pitch_deg, throttle: 0.5 };
    let own = law(targets, state, &refs, &ControlGains::default(), skill.gain_error);
    blend_nudge(own, nudge, skill.compliance)
}

/// Stateful synthetic pilot flying a task at the substep rate.
#[derive(Debug, Clone)]
pub struct Trainee {
    pub skill: TraineeSkill,
    pub gains: ControlGains,
    spec: TaskSpec,
    tracker: PhaseTracker,
    rng: ChaCha8Rng,
    seen: VecDeque<FlightState>,
    delay_steps: usize,
    noise: [f64; 2],
    refs: Refs,
    phase: usize,
}

const NOISE_TAU_S: f64 = 2.0;

impl Trainee {
    pub fn new(
        spec: TaskSpec,
        skill: TraineeSkill,
        seed: u64,
        initial: &FlightState,
        throttle: f64,
        substep_hz: u32,
    ) -> Self {
        Trainee {
            skill,
            gains: ControlGains::default(),
            spec,
            tracker: PhaseTracker::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: VecDeque::from([*initial]),
            delay_steps: (skill.reaction_delay_s * f64::from(substep_hz)).round() as usize,
            noise: [0.0; 2],
            refs: Refs { pitch_deg: initial.pitch_deg, throttle },
            phase: 0,
        }
    }

    pub fn phase_index(&self) -> usize {
        self.tracker.phase_index()
    }

    /// Records what the pilot sees at each substep.
    pub fn observe(&mut self, state: FlightState) {
        self.seen.push_back(state);
        while self.seen.len() > self.delay_steps + 1 {
            self.seen.pop_front();
        }
    }

    /// Once-per-second phase bookkeeping.
    pub fn on_tick(&mut self, tick: u64, state: &FlightState) {
        self.tracker.update(tick, state, &self.spec);
    }

    fn perceived(&self) -> FlightState {
        *self.seen.front().expect("at least one observation")
    }

    /// Own stick and throttle for the next `dt` seconds.
    pub fn control(&mut self, dt: f64) -> ControlInput {
        let s = self.perceived();
        let phase = self.phase_index();
        if phase != self.phase {
            self.phase = phase;
            self.refs.pitch_deg = s.pitch_deg;
        }
        let targets = PhaseTargets::of(&self.spec.phases[phase]);
        let k = self.skill.gain_error;
        let mut out = law(&targets, &s, &self.refs, &self.gains, k);

        match (targets.altitude_ft, targets.ias_kt) {
            (Some(_), Some(ias)) => {
                self.refs.throttle =
                    (self.refs.throttle + k * self.gains.throttle_rate * (ias - s.ias_kt) * dt).clamp(0.0, 1.0);
            }
            (None, Some(ias)) => {
                self.refs.pitch_deg += k * self.gains.speed_to_pitch_rate * (s.ias_kt - ias) * dt;
            }
            _ => {}
        }

        if self.skill.noise_sigma > 0.0 {
            let a = (-dt / NOISE_TAU_S).exp();
            let b = self.skill.noise_sigma * (1.0 - a * a).sqrt();
            for n in &mut self.noise {
                let w: f64 = StandardNormal.sample(&mut self.rng);
                *n = a * *n + b * w;
            }
            out.stick_x += self.noise[0];
            out.stick_y += self.noise[1];
        }
        out.clamped()
    }

    pub fn blend(&self, own: ControlInput, nudge: Option<ControlInput>) -> ControlInput {
        blend_nudge(own, nudge, self.skill.compliance)
    }
}
