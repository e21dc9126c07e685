//! Rule-table stand-in for the model backend.

use super::{
    control_axis, Assessment, GuidanceNote, GuidancePacket, Instrument, PipelineInput, Status, StatusCheck,
    FIRM_SEVERITY,
};
use crate::ems::{select_mode, Trigger};
use crate::flight_state::Metric;
use crate::stick::{Direction, MagnitudeClass, StickOp};
use crate::task_standards::MetricDeviation;

pub fn oracle_status(input: &PipelineInput) -> StatusCheck {
    let report = &input.report;
    StatusCheck {
        tick: input.tick,
        status: Status::of_report(report),
        worst_metric: report.worst,
        assessments: report
            .deviations
            .iter()
            .map(|d| Assessment {
                metric: d.metric,
                in_band: d.in_band,
                deviation: d.deviation,
                note: if d.in_band {
                    "within standard".to_string()
                } else {
                    format!("{:.1} tolerances off{}", d.severity(), if d.trend { ", growing" } else { "" })
                },
            })
            .collect(),
    }
}

/// Stick operation opposing a deviation, or `None` for metrics without a
/// control axis.
pub(crate) fn correction_op(d: &MetricDeviation) -> Option<StickOp> {
    let axis = control_axis(d.metric)?;
    let direction = Direction::opposing(d.deviation)?;
    let magnitude = if d.severity() >= FIRM_SEVERITY { MagnitudeClass::Firm } else { MagnitudeClass::Light };
    Some(StickOp::new(axis, direction, magnitude))
}

fn hint(d: &MetricDeviation) -> &'static str {
    let low = d.deviation < 0.0;
    match d.metric {
        Metric::Bank if d.target == 0.0 => "roll the wings level",
        Metric::Bank if d.value.abs() > d.target.abs() => "reduce bank",
        Metric::Bank => "increase bank",
        Metric::Heading => "turn back toward the target heading",
        Metric::Altitude if low => "climb back to the target altitude",
        Metric::Altitude => "descend back to the target altitude",
        Metric::Pitch if low => "raise the nose",
        Metric::Pitch => "lower the nose",
        Metric::Vs if low => "reduce the descent rate",
        Metric::Vs => "reduce the climb rate",
        Metric::Ias if low => "add power or lower the nose to gain airspeed",
        Metric::Ias => "reduce power or raise the nose to lose airspeed",
        _ => "return toward the target",
    }
}

fn deviation_sentence(d: &MetricDeviation) -> String {
    let name = d.metric.display_name();
    let mut s = format!("{}{} {:.0} against target {:.0}.", name[..1].to_uppercase(), &name[1..], d.value, d.target);
    match correction_op(d) {
        Some(op) => s.push_str(&format!(" {} to {}.", capitalize(op.describe()), hint(d))),
        None => s.push_str(&format!(" {}.", capitalize(hint(d)))),
    }
    s.push_str(&format!(" Check the {}.", Instrument::for_metric(d.metric)));
    s
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub fn oracle_guidance(input: &PipelineInput, status: &StatusCheck) -> GuidanceNote {
    let worst = status.worst_metric.and_then(|m| input.report.get(m));
    let mut parts = Vec::new();
    if let (Some(entry), Some(op)) = (&input.phase_entry, input.pre_start_op()) {
        parts.push(format!("Entering {}: begin {}.", entry.name.replace('_', " "), op.describe()));
    }
    match worst {
        Some(d) => parts.push(deviation_sentence(d)),
        None if parts.is_empty() => {
            parts.push(format!("All metrics within standard in {}. Maintain.", input.report.phase.replace('_', " ")))
        }
        None => {}
    }
    GuidanceNote { tick: input.tick, guidance: parts.join(" "), focus_metric: worst.map(|d| d.metric) }
}

pub fn oracle_packet(input: &PipelineInput, note: &GuidanceNote, provenance: &[String]) -> GuidancePacket {
    let mut packet = GuidancePacket {
        tick: input.tick,
        trigger: None,
        ems_mode: None,
        stick_op: None,
        instruments: Vec::new(),
        rationale: note.guidance.clone(),
        provenance: provenance.to_vec(),
    };
    if let Some(op) = input.pre_start_op() {
        packet.trigger = Some(Trigger::PreStart);
        packet.ems_mode = Some(select_mode(Trigger::PreStart));
        packet.stick_op = Some(StickOp { magnitude: MagnitudeClass::Light, ..op });
    } else if let Some(d) = note.focus_metric.and_then(|m| input.report.get(m)) {
        packet.instruments.push(Instrument::for_metric(d.metric));
        if let Some(op) = correction_op(d) {
            packet.trigger = Some(Trigger::Correction);
            packet.ems_mode = Some(select_mode(Trigger::Correction));
            packet.stick_op = Some(op);
        }
    }
    packet
}
