use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::pipeline::ChainRecord;
use super::schema::validate_payload;
use super::{control_axis, GuidanceNote, GuidancePacket, Instrument, PipelineInput, Stage, Status, StatusCheck};
use crate::ems::Trigger;
use crate::stick::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    /// All three stages completed.
    C1,
    /// Every stage reply matches its schema.
    C2,
    /// Outputs agree with the flight state.
    C3,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorVerdict {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub overall: bool,
    /// One line per failed check, prefixed with the criterion.
    pub failures: Vec<String>,
}

impl ValidatorVerdict {
    pub fn passed(&self, c: Criterion) -> bool {
        match c {
            Criterion::C1 => self.c1,
            Criterion::C2 => self.c2,
            Criterion::C3 => self.c3,
        }
    }

    /// Criteria on which two verdicts disagree.
    pub fn diff(&self, other: &ValidatorVerdict) -> Vec<Criterion> {
        [Criterion::C1, Criterion::C2, Criterion::C3]
            .into_iter()
            .filter(|c| self.passed(*c) != other.passed(*c))
            .collect()
    }
}

fn check_c2<T: DeserializeOwned + PartialEq>(
    chain: &ChainRecord,
    stage: Stage,
    typed: Option<&T>,
    fail: &mut Vec<String>,
) {
    let Some(raw) = chain.stage(stage).and_then(|s| s.raw.as_ref()) else {
        return;
    };
    let payload: serde_json::Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(e) => return fail.push(format!("C2: {stage} reply is not JSON: {e}")),
    };
    if let Err(errs) = validate_payload(stage, &payload) {
        return fail.push(format!("C2: {stage} reply violates schema: {}", errs.join("; ")));
    }
    match (serde_json::from_value::<T>(payload), typed) {
        (Ok(parsed), Some(t)) if parsed != *t => fail.push(format!("C2: {stage} output differs from its reply")),
        (Err(e), _) => fail.push(format!("C2: {stage} reply does not decode: {e}")),
        _ => {}
    }
}

fn check_status(input: &PipelineInput, s: &StatusCheck, fail: &mut Vec<String>) {
    let report = &input.report;
    let expected = Status::of_report(report);
    if s.status != expected {
        fail.push(format!("C3: status {:?} but report implies {:?}", s.status, expected));
    }
    if s.worst_metric != report.worst {
        fail.push(format!("C3: worst metric {:?} but report has {:?}", s.worst_metric, report.worst));
    }
    for d in &report.deviations {
        match s.assessments.iter().find(|a| a.metric == d.metric) {
            Some(a) if a.in_band != d.in_band => fail.push(format!("C3: {} band flag disagrees", d.metric.key())),
            None => fail.push(format!("C3: {} not assessed", d.metric.key())),
            _ => {}
        }
    }
}

fn check_guidance(input: &PipelineInput, g: &GuidanceNote, fail: &mut Vec<String>) {
    if let Some(worst) = input.report.worst {
        if !g.guidance.to_lowercase().contains(worst.display_name()) {
            fail.push(format!("C3: guidance does not mention {}", worst.display_name()));
        }
        if g.focus_metric != Some(worst) {
            fail.push(format!("C3: guidance focuses on {:?}, not {}", g.focus_metric, worst.key()));
        }
    }
}

fn check_packet(input: &PipelineInput, p: &GuidancePacket, fail: &mut Vec<String>) {
    let worst = input.report.worst_deviation();
    if let Some(expected) = input.pre_start_op() {
        if p.trigger != Some(Trigger::PreStart) {
            fail.push("C3: phase entry calls for a pre-start".into());
        } else if p.stick_op.map(|op| (op.axis, op.direction)) != Some((expected.axis, expected.direction)) {
            fail.push(format!("C3: pre-start should be {}", expected.describe()));
        }
        return;
    }
    if p.trigger == Some(Trigger::PreStart) {
        fail.push("C3: pre-start without a phase entry".into());
        return;
    }
    match worst {
        None => {
            if p.trigger.is_some() || !p.instruments.is_empty() {
                fail.push("C3: guidance emitted while all metrics are in band".into());
            }
        }
        Some(d) => {
            let instrument = Instrument::for_metric(d.metric);
            if !p.instruments.contains(&instrument) {
                fail.push(format!("C3: instruments omit the {instrument}"));
            }
            match control_axis(d.metric) {
                Some(axis) => match (p.trigger, p.stick_op) {
                    (Some(Trigger::Correction), Some(op)) => {
                        if op.axis != axis {
                            fail.push(format!(
                                "C3: {} is corrected on axis {:?}, not {:?}",
                                d.metric.key(),
                                axis,
                                op.axis
                            ));
                        }
                        if Direction::opposing(d.deviation) != Some(op.direction) {
                            fail.push(format!("C3: stick direction does not oppose the {} deviation", d.metric.key()));
                        }
                    }
                    _ => fail.push(format!("C3: {} out of band but no correction", d.metric.key())),
                },
                None if p.trigger.is_some() => {
                    fail.push(format!("C3: {} has no stick axis but a cue was emitted", d.metric.key()))
                }
                None => {}
            }
        }
    }
}

/// Judges one tick's chain against its input.
pub fn validate_record(input: &PipelineInput, chain: &ChainRecord) -> ValidatorVerdict {
    let mut fail = Vec::new();

    let c1 = chain.completed() && chain.status_check.is_some() && chain.guidance.is_some() && chain.packet.is_some();
    if !c1 {
        let missing: Vec<&str> =
            Stage::ALL.iter().filter(|s| !chain.stage(**s).is_some_and(|r| r.completed)).map(|s| s.id()).collect();
        fail.push(format!("C1: incomplete stages: {}", missing.join(", ")));
    }

    let before = fail.len();
    check_c2(chain, Stage::StatusCheck, chain.status_check.as_ref(), &mut fail);
    check_c2(chain, Stage::Guidance, chain.guidance.as_ref(), &mut fail);
    check_c2(chain, Stage::Format, chain.packet.as_ref(), &mut fail);
    if let Some(p) = &chain.packet {
        if let Err(e) = p.check_invariants() {
            fail.push(format!("C2: {e}"));
        }
    }
    let c2 = fail.len() == before;

    let before = fail.len();
    if let Some(s) = &chain.status_check {
        check_status(input, s, &mut fail);
    }
    if let Some(g) = &chain.guidance {
        check_guidance(input, g, &mut fail);
    }
    if let Some(p) = &chain.packet {
        check_packet(input, p, &mut fail);
    }
    let c3 = fail.len() == before;

    ValidatorVerdict { c1, c2, c3, overall: c1 && c2 && c3, failures: fail }
}
