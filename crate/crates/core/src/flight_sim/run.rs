use serde::{Deserialize, Serialize};

use super::model::{integrate, trim_level, trim_pitch_for_path, AircraftParams, AircraftState, KT_TO_MS, SUBSTEP_HZ};
use super::scenario::Scenario;
use super::trainee::{Trainee, TraineeSkill};
use super::SimError;
use crate::ems::{nudge_at, EmsCommand};
use crate::flight_state::{ControlInput, FlightState, TelemetryRecord, TelemetrySource};
use crate::task_standards::TaskSpec;

/// Supplies EMS commands in response to each telemetry record.
pub trait Assistant {
    fn on_tick(&mut self, record: &TelemetryRecord) -> Vec<EmsCommand>;
}

/// Controls actually applied during one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSample {
    pub tick: u64,
    /// Input on the last substep of the tick.
    pub input: ControlInput,
    /// Mean EMS nudge over the tick, before compliance.
    pub nudge: ControlInput,
    pub disturbed: bool,
    pub stalled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub record: TelemetryRecord,
    pub control: ControlSample,
}

/// Closed-loop simulation advanced one 1 Hz tick at a time.
#[derive(Debug, Clone)]
pub struct ScenarioSim {
    scenario: Scenario,
    params: AircraftParams,
    spec: TaskSpec,
    aircraft: AircraftState,
    input: ControlInput,
    trainee: Trainee,
    active: Vec<EmsCommand>,
    manual: Option<ControlInput>,
    tick: u64,
    last: FlightState,
    touchdown: bool,
}

impl ScenarioSim {
    pub fn new(scenario: &Scenario, skill: TraineeSkill, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        skill.validate()?;
        let params = scenario.params();
        params.validate()?;
        let ic = &scenario.initial;
        let (mut aircraft, mut input) = trim_level(ic.ias_kt, ic.altitude_ft, &params)?;
        let v = ic.ias_kt * KT_TO_MS;
        aircraft.gamma = (ic.vs_fpm * 0.00508 / v).clamp(-1.0, 1.0).asin();
        aircraft.theta = trim_pitch_for_path(ic.ias_kt, aircraft.gamma, &params);
        aircraft.phi = ic.bank_deg.to_radians();
        aircraft.psi = ic.heading_deg.to_radians();
        if let Some(t) = ic.throttle {
            input.throttle = t;
        }
        let env = scenario.environment_at(0.0);
        let last = aircraft.observe(&input, &params, &env, 0.0).normalized()?;
        let spec = scenario.task_spec();
        let trainee = Trainee::new(spec.clone(), skill, seed, &last, input.throttle, SUBSTEP_HZ);
        Ok(ScenarioSim {
            scenario: scenario.clone(),
            params,
            spec,
            aircraft,
            input,
            trainee,
            active: Vec::new(),
            manual: None,
            tick: 0,
            last,
            touchdown: false,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn state(&self) -> FlightState {
        self.last
    }

    pub fn is_finished(&self) -> bool {
        self.touchdown || self.tick >= self.scenario.duration_s
    }

    /// Controls applied on the last substep.
    pub fn current_input(&self) -> ControlInput {
        self.input
    }

    pub fn touched_down(&self) -> bool {
        self.touchdown
    }

    /// Commands to play from their start times onward.
    pub fn push_commands(&mut self, commands: impl IntoIterator<Item = EmsCommand>) {
        self.active.extend(commands);
    }

    /// Replaces the synthetic trainee with fixed inputs; `None` hands
    /// control back.
    pub fn set_manual_input(&mut self, input: Option<ControlInput>) {
        self.manual = input.map(ControlInput::clamped);
    }

    /// Advances one second. Returns `None` once the scenario has ended.
    pub fn step_tick(&mut self) -> Result<Option<TickOutput>, SimError> {
        if self.is_finished() {
            return Ok(None);
        }
        let n = SUBSTEP_HZ as usize;
        let dt = 1.0 / f64::from(SUBSTEP_HZ);
        let mut nudge_sum = ControlInput { stick_x: 0.0, stick_y: 0.0, throttle: 0.0 };
        let mut disturbed = false;
        let mut stalled = false;
        for i in 0..n {
            let t = self.tick as f64 + i as f64 * dt;
            let env = self.scenario.environment_at(t);
            disturbed |= self.scenario.disturbed_at(t);
            let own = self.manual.unwrap_or_else(|| self.trainee.control(dt));
            let nudge =
                self.active.iter().map(|c| nudge_at(c, t * 1000.0)).filter(|nd| *nd != ControlInput::default()).reduce(
                    |a, b| ControlInput {
                        stick_x: a.stick_x + b.stick_x,
                        stick_y: a.stick_y + b.stick_y,
                        throttle: 0.0,
                    },
                );
            if let Some(nd) = nudge {
                nudge_sum.stick_x += nd.stick_x * dt;
                nudge_sum.stick_y += nd.stick_y * dt;
            }
            let mut input = if self.manual.is_some() { own } else { self.trainee.blend(own, nudge) };
            let bias = self.scenario.control_bias_at(t);
            input.stick_x += bias.stick_x;
            input.stick_y += bias.stick_y;
            self.input = input.clamped();

            let r = integrate(&self.aircraft, &self.input, &self.params, &env, dt)?;
            self.aircraft = r.state;
            stalled |= r.stalled;
            if self.aircraft.h_m <= 0.0 {
                self.aircraft.h_m = 0.0;
                self.touchdown = true;
            }
            let obs = self.aircraft.observe(&self.input, &self.params, &env, t + dt);
            self.trainee.observe(obs);
            if self.touchdown {
                break;
            }
        }
        self.tick += 1;
        let env = self.scenario.environment_at(self.tick as f64);
        let mut state = self.aircraft.observe(&self.input, &self.params, &env, self.tick as f64).normalized()?;
        state.t = self.tick as f64;
        self.last = state;
        self.trainee.on_tick(self.tick, &state);
        let now_ms = self.tick * 1000;
        self.active.retain(|c| c.end_ms() > now_ms);
        Ok(Some(TickOutput {
            record: TelemetryRecord { tick: self.tick, state, source: TelemetrySource::Sim },
            control: ControlSample { tick: self.tick, input: self.input, nudge: nudge_sum, disturbed, stalled },
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub scenario: String,
    pub records: Vec<TelemetryRecord>,
    pub controls: Vec<ControlSample>,
    pub commands: Vec<EmsCommand>,
    pub touchdown: bool,
}

impl ScenarioRun {
    /// Telemetry lines, one per tick.
    pub fn telemetry_lines(&self) -> String {
        self.records.iter().map(|r| r.to_line() + "\n").collect()
    }
}

/// Flies `scenario` to the end. With an assistant, its commands are played
/// back to the trainee as stick nudges.
pub fn run_scenario(
    scenario: &Scenario,
    skill: TraineeSkill,
    mut assistant: Option<&mut dyn Assistant>,
    seed: u64,
) -> Result<ScenarioRun, SimError> {
    let mut sim = ScenarioSim::new(scenario, skill, seed)?;
    let mut run = ScenarioRun {
        scenario: scenario.name.clone(),
        records: Vec::with_capacity(scenario.duration_s as usize),
        controls: Vec::with_capacity(scenario.duration_s as usize),
        commands: Vec::new(),
        touchdown: false,
    };
    while let Some(out) = sim.step_tick()? {
        if let Some(a) = assistant.as_deref_mut() {
            let cmds = a.on_tick(&out.record);
            run.commands.extend(cmds.iter().cloned());
            sim.push_commands(cmds);
        }
        run.records.push(out.record);
        run.controls.push(out.control);
    }
    run.touchdown = sim.touched_down();
    Ok(run)
}
