//! JSON-lines session log: a header line, then one record per tick.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SessionConfig, SessionError, SessionRecord};
use crate::ems::CalibrationProfile;
use crate::flight_sim::FlightCondition;
use crate::guidance::{validate_record, Criterion, PhaseEntry, PipelineInput, ValidatorVerdict};
use crate::task_standards::{evaluate, PhaseTracker, PhaseTransition, TaskSpec};

pub const LOG_SCHEMA: &str = "kinetrain.session.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub condition: FlightCondition,
    pub duration_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub config: SessionConfig,
    pub task_spec: TaskSpec,
    /// Absent for external telemetry.
    pub scenario: Option<ScenarioMeta>,
    pub profile: CalibrationProfile,
    pub backend_id: String,
}

impl LogHeader {
    /// Condition label for scoring; external telemetry counts as normal.
    pub fn condition(&self) -> FlightCondition {
        self.scenario.as_ref().map_or(FlightCondition::Normal, |s| s.condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub header: LogHeader,
    pub records: Vec<SessionRecord>,
}

impl SessionLog {
    pub fn write_to(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "{}", serde_json::to_string(&self.header)?)?;
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

pub fn read_log<R: BufRead>(reader: R) -> Result<SessionLog, SessionError> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let corrupt = |line: usize, reason: String| SessionError::CorruptLog { line: line + 1, reason };
    let (n, first) = lines.next().ok_or_else(|| corrupt(0, "empty log".into()))?;
    let header: LogHeader = serde_json::from_str(&first?).map_err(|e| corrupt(n, e.to_string()))?;
    if header.schema != LOG_SCHEMA {
        return Err(corrupt(n, format!("unsupported schema {}", header.schema)));
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let record: SessionRecord = serde_json::from_str(&line?).map_err(|e| corrupt(n, e.to_string()))?;
        records.push(record);
    }
    Ok(SessionLog { header, records })
}

pub fn read_log_file(path: &Path) -> Result<SessionLog, SessionError> {
    read_log(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub tick: u64,
    pub field: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub ticks: usize,
    pub pass_ticks: usize,
    /// Recomputed verdicts, one per record.
    pub verdicts: Vec<ValidatorVerdict>,
    pub mismatches: Vec<Mismatch>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes phase entries, deviation reports and verdicts from the stored
/// states and chain outputs, and lists every disagreement with the log.
pub fn replay(log: &SessionLog) -> ReplayReport {
    let spec: &TaskSpec = &log.header.task_spec;
    let mut tracker = PhaseTracker::new();
    let mut history = Vec::new();
    let mut out =
        ReplayReport { ticks: log.records.len(), pass_ticks: 0, verdicts: Vec::new(), mismatches: Vec::new() };
    let mut mismatches = Vec::new();
    for (i, rec) in log.records.iter().enumerate() {
        let tick = rec.tick;
        let mut flag = |field: &str, detail: String| mismatches.push(Mismatch { tick, field: field.into(), detail });
        if tick != i as u64 + 1 {
            flag("tick", format!("expected tick {}", i + 1));
        }
        let phase_entry = match tracker.update(tick, &rec.state, spec) {
            PhaseTransition::Advance { index, name } => {
                Some(PhaseEntry { index, name, tendency: spec.phases[index].stick_tendency })
            }
            _ => None,
        };
        if phase_entry != rec.phase_entry {
            flag("phase_entry", format!("recomputed {phase_entry:?}"));
        }
        if tracker.is_complete() != rec.task_complete {
            flag("task_complete", format!("recomputed {}", tracker.is_complete()));
        }
        let report = evaluate(tick, &rec.state, spec, tracker.phase_index(), &history);
        history.push(rec.state);
        if history.len() > spec.history_len {
            history.remove(0);
        }
        if report != rec.report {
            flag("report", format!("recomputed worst {:?}, stored {:?}", report.worst, rec.report.worst));
        }
        let input = PipelineInput { tick, task: spec.task_id, state: rec.state, report, phase_entry };
        let verdict = validate_record(&input, &rec.chain);
        for c in verdict.diff(&rec.verdict) {
            let name = match c {
                Criterion::C1 => "C1",
                Criterion::C2 => "C2",
                Criterion::C3 => "C3",
            };
            flag("verdict", format!("{name} recomputed {} stored {}", verdict.passed(c), rec.verdict.passed(c)));
        }
        if (!verdict.overall || rec.late) && (!rec.commands.is_empty() || !rec.voice.is_empty()) {
            flag("commands", "cue emitted without a passing, on-time chain".into());
        }
        if rec.commands.iter().any(|c| c.start_tick != tick) {
            flag("commands", "command scheduled for another tick".into());
        }
        if verdict.overall {
            out.pass_ticks += 1;
        }
        out.verdicts.push(verdict);
    }
    out.mismatches = mismatches;
    out
}
