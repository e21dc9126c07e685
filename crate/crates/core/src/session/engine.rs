use std::time::{Duration, Instant};

use super::{SessionConfig, SessionError, SessionRecord, VoiceEvent};
use crate::ems::{
    encode_frame, CalibrationProfile, DeviceLink, EmsCommand, GateOutcome, LoopbackDevice, SafetyGate, SafetyLimits,
    TcpDeviceLink, Trigger, WaveformConfig,
};
use crate::flight_sim::Assistant;
use crate::flight_state::{FlightState, TelemetryRecord};
use crate::guidance::{validate_record, PhaseEntry, Pipeline, PipelineInput};
use crate::task_standards::{evaluate, PhaseTracker, PhaseTransition, TaskSpec};

/// Opens the configured stimulator link, or an in-process simulated
/// device when no address is set.
pub fn connect_device(config: &SessionConfig) -> Result<Box<dyn DeviceLink>, SessionError> {
    Ok(match &config.device_addr {
        Some(addr) => Box::new(TcpDeviceLink::connect(addr, Duration::from_millis(500))?),
        None => Box::new(LoopbackDevice::default()),
    })
}

/// Single writer for one session: owns the phase state, the safety gate
/// and the device link.
pub struct SessionEngine {
    spec: TaskSpec,
    pipeline: Pipeline,
    profile: CalibrationProfile,
    gate: SafetyGate,
    waveform: WaveformConfig,
    device: Option<Box<dyn DeviceLink>>,
    assist: bool,
    tracker: PhaseTracker,
    history: Vec<FlightState>,
    last_tick: u64,
    wall_ms: Vec<f64>,
}

impl SessionEngine {
    pub fn new(
        spec: TaskSpec,
        pipeline: Pipeline,
        profile: CalibrationProfile,
        device: Option<Box<dyn DeviceLink>>,
        assist: bool,
    ) -> Self {
        SessionEngine {
            spec,
            pipeline,
            profile,
            gate: SafetyGate::new(SafetyLimits::default()),
            waveform: WaveformConfig::default(),
            device,
            assist,
            tracker: PhaseTracker::new(),
            history: Vec::new(),
            last_tick: 0,
            wall_ms: Vec::new(),
        }
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn profile(&self) -> &CalibrationProfile {
        &self.profile
    }

    pub fn is_complete(&self) -> bool {
        self.tracker.is_complete()
    }

    pub fn last_tick(&self) -> u64 {
        self.last_tick
    }

    /// Wall-clock chain latency of every tick so far.
    pub fn wall_latencies_ms(&self) -> &[f64] {
        &self.wall_ms
    }

    pub fn set_assist(&mut self, on: bool) {
        self.assist = on;
    }

    pub fn run_tick(&mut self, telemetry: &TelemetryRecord) -> Result<SessionRecord, SessionError> {
        let tick = telemetry.tick;
        if tick != self.last_tick + 1 {
            return Err(SessionError::TickOutOfOrder { expected: self.last_tick + 1, got: tick });
        }
        self.last_tick = tick;
        let state = telemetry.state;

        let transition = self.tracker.update(tick, &state, &self.spec);
        let phase_entry = match &transition {
            PhaseTransition::Advance { index, name } => Some(PhaseEntry {
                index: *index,
                name: name.clone(),
                tendency: self.spec.phases[*index].stick_tendency,
            }),
            _ => None,
        };
        let report = evaluate(tick, &state, &self.spec, self.tracker.phase_index(), &self.history);
        self.history.push(state);
        if self.history.len() > self.spec.history_len {
            self.history.remove(0);
        }

        let input = PipelineInput { tick, task: self.spec.task_id, state, report, phase_entry };
        let started = Instant::now();
        let chain = self.pipeline.run(&input);
        let wall = started.elapsed().as_secs_f64() * 1000.0;
        self.wall_ms.push(wall);
        let verdict = validate_record(&input, &chain);
        let late = wall > self.pipeline.config().deadline_ms as f64;

        let mut record = SessionRecord {
            tick,
            state,
            control: None,
            phase_entry: input.phase_entry,
            task_complete: self.tracker.is_complete(),
            report: input.report,
            chain,
            verdict,
            late,
            commands: Vec::new(),
            rejected: Vec::new(),
            voice: Vec::new(),
            device_error: None,
        };
        // fail silent: only a fully validated, on-time chain reaches the arm
        if self.assist && record.verdict.overall && !late {
            self.emit(&mut record);
        }
        Ok(record)
    }

    fn emit(&mut self, record: &mut SessionRecord) {
        let Some(packet) = record.chain.packet.clone() else {
            return;
        };
        if let (Some(trigger), Some(op)) = (packet.trigger, packet.stick_op) {
            let cmd = EmsCommand::for_stick_op(
                &op,
                trigger,
                record.tick,
                self.waveform.default_duration_ms,
                &self.profile,
                &self.waveform,
            );
            match cmd.map(|c| self.gate.admit(&c, &self.profile)) {
                Ok(GateOutcome::Rejected { reason }) => record.rejected.push(reason),
                Ok(outcome) => {
                    let cmd = outcome.into_command().expect("admitted");
                    let sent = match self.device.as_mut() {
                        Some(dev) => encode_frame(&cmd, &self.profile)
                            .map_err(|e| e.to_string())
                            .and_then(|f| dev.send(&f).map_err(|e| e.to_string())),
                        None => Ok(()),
                    };
                    match sent {
                        Ok(()) => record.commands.push(cmd),
                        Err(e) => {
                            tracing::warn!(tick = record.tick, "device: {e}");
                            record.device_error = Some(e);
                        }
                    }
                }
                Err(e) => record.device_error = Some(e.to_string()),
            }
        }
        if packet.trigger != Some(Trigger::PreStart) {
            if let Some(first) = packet.instruments.first() {
                record.voice.push(VoiceEvent::check(record.tick, *first));
            }
        }
    }
}

impl Assistant for SessionEngine {
    fn on_tick(&mut self, record: &TelemetryRecord) -> Vec<EmsCommand> {
        match self.run_tick(record) {
            Ok(r) => r.commands,
            Err(e) => {
                tracing::warn!("session tick failed: {e}");
                Vec::new()
            }
        }
    }
}
