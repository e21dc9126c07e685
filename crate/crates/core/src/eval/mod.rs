//! Scoring of session logs and desk-scale training measures.

mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight_sim::FlightCondition;
use crate::guidance::Criterion;
use crate::session::{replay, SessionLog};
use crate::task_standards::TaskId;

pub use metrics::{
    closed_loop_benefit, compare_runs, compute_training_metrics, metrics_of_log, BenefitReport, MetricDeltas,
    TrainingMetrics,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no logs to score")]
    EmptyLogSet,
    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),
}

/// Remote-model reference accuracies per task and in total, in percent.
/// Display only.
pub const REFERENCE_ACCURACY: [(&str, f64); 5] = [
    ("straight_level", 93.3),
    ("takeoff_climb", 95.5),
    ("steep_turn", 91.6),
    ("deadstick_landing", 92.6),
    ("total", 93.2),
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub records: usize,
    pub passed: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.records == 0 {
            0.0
        } else {
            self.passed as f64 / self.records as f64
        }
    }

    fn add(&mut self, pass: bool) {
        self.records += 1;
        self.passed += usize::from(pass);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: TaskId,
    pub logs: usize,
    pub all: Tally,
    pub normal: Tally,
    pub abnormal: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskScore>,
    pub normal: Tally,
    pub abnormal: Tally,
    pub total: Tally,
    pub total_accuracy: f64,
    /// Failing ticks per criterion; a tick can fail several.
    pub failures: BTreeMap<String, usize>,
    /// Records whose stored verdict disagrees with the recomputed one.
    pub stored_verdict_mismatches: usize,
}

fn criterion_key(c: Criterion) -> &'static str {
    match c {
        Criterion::C1 => "C1",
        Criterion::C2 => "C2",
        Criterion::C3 => "C3",
    }
}

/// Scores logs by recomputing every verdict; stored verdicts are only
/// compared, never counted.
pub fn score_workflow(logs: &[SessionLog]) -> Result<EvalReport, EvalError> {
    if logs.is_empty() {
        return Err(EvalError::EmptyLogSet);
    }
    let mut tasks: BTreeMap<TaskId, TaskScore> = BTreeMap::new();
    let mut normal = Tally::default();
    let mut abnormal = Tally::default();
    let mut total = Tally::default();
    let mut failures: BTreeMap<String, usize> = ["C1", "C2", "C3"].iter().map(|k| (k.to_string(), 0)).collect();
    let mut stored_verdict_mismatches = 0;
    for log in logs {
        let task = log.header.task_spec.task_id;
        let condition = log.header.condition();
        let score = tasks.entry(task).or_insert_with(|| TaskScore {
            task,
            logs: 0,
            all: Tally::default(),
            normal: Tally::default(),
            abnormal: Tally::default(),
        });
        score.logs += 1;
        let rep = replay(log);
        for (verdict, rec) in rep.verdicts.iter().zip(&log.records) {
            let pass = verdict.overall;
            score.all.add(pass);
            total.add(pass);
            match condition {
                FlightCondition::Normal => {
                    score.normal.add(pass);
                    normal.add(pass);
                }
                FlightCondition::Abnormal => {
                    score.abnormal.add(pass);
                    abnormal.add(pass);
                }
            }
            for c in [Criterion::C1, Criterion::C2, Criterion::C3] {
                if !verdict.passed(c) {
                    *failures.get_mut(criterion_key(c)).expect("key") += 1;
                }
            }
            if *verdict != rec.verdict {
                stored_verdict_mismatches += 1;
            }
        }
    }
    Ok(EvalReport {
        tasks: tasks.into_values().collect(),
        normal,
        abnormal,
        total,
        total_accuracy: total.accuracy(),
        failures,
        stored_verdict_mismatches,
    })
}

fn pct(t: &Tally) -> String {
    if t.records == 0 {
        "-".into()
    } else {
        format!("{:.1}%", 100.0 * t.accuracy())
    }
}

impl EvalReport {
    pub fn task(&self, task: TaskId) -> Option<&TaskScore> {
        self.tasks.iter().find(|t| t.task == task)
    }

    /// Human-readable table with the reference row underneath.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20} {:>8} {:>9} {:>9} {:>9}", "task", "ticks", "normal", "abnormal", "all");
        for t in &self.tasks {
            let _ = writeln!(
                s,
                "{:<20} {:>8} {:>9} {:>9} {:>9}",
                t.task.as_str(),
                t.all.records,
                pct(&t.normal),
                pct(&t.abnormal),
                pct(&t.all)
            );
        }
        let _ = writeln!(
            s,
            "{:<20} {:>8} {:>9} {:>9} {:>9}",
            "total",
            self.total.records,
            pct(&self.normal),
            pct(&self.abnormal),
            pct(&self.total)
        );
        let _ =
            writeln!(s, "failures: C1 {}  C2 {}  C3 {}", self.failures["C1"], self.failures["C2"], self.failures["C3"]);
        let reference: Vec<String> = REFERENCE_ACCURACY.iter().map(|(k, v)| format!("{k} {v:.1}%")).collect();
        let _ = writeln!(s, "reference (remote model, not reproduced): {}", reference.join(", "));
        s
    }
}
