use std::fs::File;
use std::io::BufReader;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use super::engine::{connect_device, SessionEngine};
use super::log::{LogHeader, ScenarioMeta, SessionLog, LOG_SCHEMA};
use super::{BackendChoice, SessionConfig, SessionError};
use crate::flight_sim::{Scenario, ScenarioSim};
use crate::flight_state::TelemetryReader;
use crate::guidance::{Backend, OracleBackend, Pipeline, PipelineConfig, RemoteBackend};
use crate::knowledge_base::{HashEmbedder, KnowledgeBase};
use crate::task_standards::TaskSpec;

fn builtin_kb() -> Arc<KnowledgeBase> {
    static KB: OnceLock<Arc<KnowledgeBase>> = OnceLock::new();
    KB.get_or_init(|| Arc::new(KnowledgeBase::builtin())).clone()
}

/// Backend and knowledge base named by the config.
pub fn build_pipeline(config: &SessionConfig) -> Result<Pipeline, SessionError> {
    let backend: Arc<dyn Backend> = match &config.backend {
        BackendChoice::Oracle { delay_ms } => Arc::new(OracleBackend::with_delay(Duration::from_millis(*delay_ms))),
        BackendChoice::Remote { base_url, model, api_key_env } => {
            let key = api_key_env.as_deref().and_then(|k| std::env::var(k).ok());
            Arc::new(RemoteBackend::new(base_url.clone(), model.clone(), key))
        }
    };
    let kb = match &config.kb_index {
        Some(path) => Arc::new(KnowledgeBase::load(path, Arc::new(HashEmbedder::default()))?),
        None => builtin_kb(),
    };
    let pc = PipelineConfig { deadline_ms: config.deadline_ms, ..PipelineConfig::default() };
    Ok(Pipeline::new(backend, Some(kb), pc))
}

/// The scenario file if one is set, else the built-in scenario for the
/// task and condition.
pub fn scenario_for(config: &SessionConfig) -> Result<Scenario, SessionError> {
    let scenario = match &config.scenario_path {
        Some(p) => Scenario::from_file(p)?,
        None => Scenario::for_task(config.task, config.condition),
    };
    if scenario.task_id != config.task {
        return Err(SessionError::ConfigInvalid(format!(
            "scenario {} flies {}, config asks for {}",
            scenario.name, scenario.task_id, config.task
        )));
    }
    Ok(scenario)
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub log: SessionLog,
    /// Wall-clock chain latency per tick.
    pub wall_latencies_ms: Vec<f64>,
    pub touchdown: bool,
}

/// Runs a batch session to the end: the synthetic trainee flies the
/// scenario, or recorded telemetry is replayed through the loop.
pub fn run_session(config: &SessionConfig) -> Result<SessionOutput, SessionError> {
    config.validate()?;
    let profile = config.load_profile()?;
    let pipeline = build_pipeline(config)?;
    let backend_id = pipeline.backend_id();
    let device = if config.assist { Some(connect_device(config)?) } else { None };

    if let Some(path) = &config.telemetry_path {
        let spec = config.task_spec(TaskSpec::builtin(config.task))?;
        let mut engine = SessionEngine::new(spec.clone(), pipeline, profile.clone(), device, config.assist);
        let mut records = Vec::new();
        for rec in TelemetryReader::new(BufReader::new(File::open(path)?)) {
            records.push(engine.run_tick(&rec?)?);
        }
        if records.is_empty() {
            return Err(SessionError::SourceExhausted);
        }
        let header = LogHeader {
            schema: LOG_SCHEMA.into(),
            config: config.clone(),
            task_spec: spec,
            scenario: None,
            profile,
            backend_id,
        };
        let wall_latencies_ms = engine.wall_latencies_ms().to_vec();
        return Ok(SessionOutput { log: SessionLog { header, records }, wall_latencies_ms, touchdown: false });
    }

    let scenario = scenario_for(config)?;
    let mut sim = ScenarioSim::new(&scenario, config.skill, config.seed)?;
    let spec = config.task_spec(sim.spec().clone())?;
    let mut engine = SessionEngine::new(spec.clone(), pipeline, profile.clone(), device, config.assist);
    let mut records = Vec::with_capacity(scenario.duration_s as usize);
    while let Some(out) = sim.step_tick()? {
        let mut rec = engine.run_tick(&out.record)?;
        rec.control = Some(out.control);
        sim.push_commands(rec.commands.iter().cloned());
        records.push(rec);
    }
    let header = LogHeader {
        schema: LOG_SCHEMA.into(),
        config: config.clone(),
        task_spec: spec,
        scenario: Some(ScenarioMeta {
            name: scenario.name.clone(),
            condition: scenario.condition,
            duration_s: scenario.duration_s,
        }),
        profile,
        backend_id,
    };
    Ok(SessionOutput {
        log: SessionLog { header, records },
        wall_latencies_ms: engine.wall_latencies_ms().to_vec(),
        touchdown: sim.touched_down(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ems::Trigger;
    use crate::flight_sim::FlightCondition;
    use crate::session::{read_log, replay};
    use crate::task_standards::TaskId;

    fn steep(seed: u64) -> SessionConfig {
        SessionConfig { task: TaskId::SteepTurn, seed, ..SessionConfig::default() }
    }

    #[test]
    fn steep_turn_scenario_gives_one_record_per_second() {
        let out = run_session(&steep(1)).unwrap();
        assert_eq!(out.log.records.len(), 90);
        let ticks: Vec<u64> = out.log.records.iter().map(|r| r.tick).collect();
        assert_eq!(ticks, (1..=90).collect::<Vec<_>>());
        assert!(out.log.records.iter().all(|r| r.control.is_some()));
        assert!(out.log.records.iter().any(|r| !r.commands.is_empty()));
    }

    #[test]
    fn oracle_runs_are_byte_identical() {
        let a = run_session(&steep(7)).unwrap().log.to_jsonl();
        let b = run_session(&steep(7)).unwrap().log.to_jsonl();
        assert_eq!(a, b);
        let c = run_session(&steep(8)).unwrap().log.to_jsonl();
        assert_ne!(a, c);
    }

    #[test]
    fn assist_off_logs_no_commands() {
        let out = run_session(&SessionConfig { assist: false, ..steep(3) }).unwrap();
        assert!(out.log.records.iter().all(|r| r.commands.is_empty() && r.voice.is_empty()));
    }

    #[test]
    fn missing_device_socket_is_unavailable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let cfg = SessionConfig { device_addr: Some(addr.clone()), ..steep(0) };
        assert!(matches!(run_session(&cfg), Err(SessionError::DeviceUnavailable(_))));
        let cfg = SessionConfig { device_addr: Some(addr), assist: false, ..steep(0) };
        assert!(run_session(&cfg).is_ok());
    }

    #[test]
    fn invalid_deadline_is_rejected() {
        let cfg = SessionConfig { deadline_ms: 1000, ..steep(0) };
        assert!(matches!(run_session(&cfg), Err(SessionError::ConfigInvalid(_))));
    }

    #[test]
    fn scenario_task_must_match() {
        let cfg = SessionConfig { task: TaskId::StraightLevel, ..steep(0) };
        assert!(scenario_for(&cfg).is_ok());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = Scenario::for_task(TaskId::SteepTurn, FlightCondition::Abnormal);
        std::fs::write(&p, serde_json::to_string(&s).unwrap()).unwrap();
        let cfg = SessionConfig { scenario_path: Some(p), ..cfg };
        assert!(matches!(scenario_for(&cfg), Err(SessionError::ConfigInvalid(_))));
    }

    #[test]
    fn fresh_log_replays_clean() {
        for condition in [FlightCondition::Normal, FlightCondition::Abnormal] {
            let out = run_session(&SessionConfig { condition, ..steep(2) }).unwrap();
            let text = out.log.to_jsonl();
            let log = read_log(text.as_bytes()).unwrap();
            assert_eq!(log, out.log);
            let rep = replay(&log);
            assert!(rep.is_clean(), "{:?}", rep.mismatches);
            assert_eq!(rep.pass_ticks, rep.ticks);
        }
    }

    #[test]
    fn tampered_direction_is_flagged_at_its_tick() {
        let mut log = run_session(&steep(4)).unwrap().log;
        let i = log
            .records
            .iter()
            .position(|r| r.chain.packet.as_ref().is_some_and(|p| p.trigger == Some(Trigger::Correction)))
            .expect("a correction tick");
        let tick = log.records[i].tick;
        let packet = log.records[i].chain.packet.as_mut().unwrap();
        let op = packet.stick_op.as_mut().unwrap();
        op.direction = op.direction.opposite();
        let rep = replay(&log);
        let at: Vec<_> = rep.mismatches.iter().filter(|m| m.tick == tick).collect();
        assert!(at.iter().any(|m| m.field == "verdict" && m.detail.starts_with("C3")), "{at:?}");
        assert!(rep.mismatches.iter().all(|m| m.tick == tick));
    }

    #[test]
    fn truncated_last_line_names_the_line() {
        let text = run_session(&steep(5)).unwrap().log.to_jsonl();
        let cut = &text[..text.trim_end().len() - 20];
        let lines = cut.lines().count();
        match read_log(cut.as_bytes()) {
            Err(SessionError::CorruptLog { line, .. }) => assert_eq!(line, lines),
            other => panic!("expected CorruptLog, got {other:?}"),
        }
    }

    #[test]
    fn telemetry_file_runs_through_the_loop() {
        let out = run_session(&SessionConfig { assist: false, ..steep(6) }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let lines: String = out
            .log
            .records
            .iter()
            .map(|r| {
                crate::flight_state::TelemetryRecord {
                    tick: r.tick,
                    state: r.state,
                    source: crate::flight_state::TelemetrySource::Sim,
                }
                .to_line()
                    + "\n"
            })
            .collect();
        std::fs::write(&p, lines).unwrap();
        let ext = run_session(&SessionConfig { telemetry_path: Some(p), ..steep(6) }).unwrap();
        assert_eq!(ext.log.records.len(), 90);
        assert!(ext.log.header.scenario.is_none());
        assert!(replay(&ext.log).is_clean());
        for (a, b) in ext.log.records.iter().zip(&out.log.records) {
            assert_eq!(a.report.worst, b.report.worst);
        }
    }
}
