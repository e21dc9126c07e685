use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::flight_sim::{FlightCondition, TraineeSkill};
use crate::flight_state::{heading_delta_deg, Metric, TelemetryRecord, TelemetrySource};
use crate::session::{run_session, SessionConfig, SessionError, SessionLog};
use crate::task_standards::{PhaseTracker, TaskId, TaskSpec};

/// Desk-scale training measures for one flown task.
///
/// Proportions count ticks inside the envelope of the phase being flown,
/// over the steady phases (those without a stick tendency; every phase if
/// the task has none) up to completion. `None` means no such tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub altitude_in_band_proportion: Option<f64>,
    pub bank_in_band_proportion: Option<f64>,
    pub speed_in_band_proportion: Option<f64>,
    /// |heading - target| at completion, against the last phase with a
    /// heading envelope. Taken at the last tick in that phase when the
    /// task did not complete.
    pub heading_rollout_error_deg: Option<f64>,
    pub task_completion_time_s: Option<f64>,
    pub scored_ticks: usize,
}

#[derive(Debug, Default)]
struct Count {
    inside: usize,
    total: usize,
}

impl Count {
    fn proportion(&self) -> Option<f64> {
        (self.total > 0).then(|| self.inside as f64 / self.total as f64)
    }
}

pub fn compute_training_metrics(trace: &[TelemetryRecord], spec: &TaskSpec) -> Result<TrainingMetrics, EvalError> {
    if trace.is_empty() {
        return Err(EvalError::IncompleteTrace("empty trace".into()));
    }
    let steady: Vec<bool> = {
        let s: Vec<bool> = spec.phases.iter().map(|p| p.stick_tendency.is_none()).collect();
        if s.iter().any(|b| *b) {
            s
        } else {
            vec![true; spec.phases.len()]
        }
    };
    let heading_phase = spec.phases.iter().rposition(|p| p.envelope(Metric::Heading).is_some());

    let mut tracker = PhaseTracker::new();
    let mut counts = [Count::default(), Count::default(), Count::default()];
    let metrics = [Metric::Altitude, Metric::Bank, Metric::Ias];
    let mut scored_ticks = 0;
    let mut heading_error = None;
    for rec in trace {
        tracker.update(rec.tick, &rec.state, spec);
        if tracker.started_tick().is_none() {
            continue;
        }
        let idx = tracker.phase_index();
        let phase = &spec.phases[idx];
        if steady[idx] {
            scored_ticks += 1;
            for (m, c) in metrics.iter().zip(counts.iter_mut()) {
                if let Some(env) = phase.envelope(*m) {
                    c.total += 1;
                    c.inside += usize::from((rec.state.get(*m) - env.target).abs() <= env.tolerance);
                }
            }
        }
        if let Some(h) = heading_phase.filter(|h| *h == idx) {
            let target = spec.phases[h].target(Metric::Heading).expect("heading envelope");
            heading_error = Some(heading_delta_deg(rec.state.heading_deg, target).abs());
        }
        if tracker.is_complete() {
            break;
        }
    }
    let Some(start) = tracker.started_tick() else {
        return Err(EvalError::IncompleteTrace("task never started".into()));
    };
    let [alt, bank, ias] = counts;
    Ok(TrainingMetrics {
        altitude_in_band_proportion: alt.proportion(),
        bank_in_band_proportion: bank.proportion(),
        speed_in_band_proportion: ias.proportion(),
        heading_rollout_error_deg: heading_error,
        task_completion_time_s: tracker.completed_tick().map(|end| (end - start) as f64),
        scored_ticks,
    })
}

/// Training metrics of the states stored in a session log.
pub fn metrics_of_log(log: &SessionLog) -> Result<TrainingMetrics, EvalError> {
    let trace: Vec<TelemetryRecord> = log
        .records
        .iter()
        .map(|r| TelemetryRecord { tick: r.tick, state: r.state, source: TelemetrySource::Sim })
        .collect();
    compute_training_metrics(&trace, &log.header.task_spec)
}

/// `post - pre` per metric; `None` where either side is missing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub altitude_in_band_proportion: Option<f64>,
    pub bank_in_band_proportion: Option<f64>,
    pub speed_in_band_proportion: Option<f64>,
    pub heading_rollout_error_deg: Option<f64>,
    pub task_completion_time_s: Option<f64>,
}

pub fn compare_runs(pre: &TrainingMetrics, post: &TrainingMetrics) -> MetricDeltas {
    let d = |a: Option<f64>, b: Option<f64>| Some(b? - a?);
    MetricDeltas {
        altitude_in_band_proportion: d(pre.altitude_in_band_proportion, post.altitude_in_band_proportion),
        bank_in_band_proportion: d(pre.bank_in_band_proportion, post.bank_in_band_proportion),
        speed_in_band_proportion: d(pre.speed_in_band_proportion, post.speed_in_band_proportion),
        heading_rollout_error_deg: d(pre.heading_rollout_error_deg, post.heading_rollout_error_deg),
        task_completion_time_s: d(pre.task_completion_time_s, post.task_completion_time_s),
    }
}

/// Seed-averaged steep-turn proportions with and without assistance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitReport {
    pub task: TaskId,
    pub seeds: Vec<u64>,
    pub skill: TraineeSkill,
    pub bank_off: f64,
    pub bank_on: f64,
    pub altitude_off: f64,
    pub altitude_on: f64,
}

impl BenefitReport {
    pub fn bank_delta(&self) -> f64 {
        self.bank_on - self.bank_off
    }

    pub fn altitude_delta(&self) -> f64 {
        self.altitude_on - self.altitude_off
    }
}

/// Flies `task` once per seed with assist off and on. A run that never
/// reaches a scored phase counts as zero time in standard.
pub fn closed_loop_benefit(task: TaskId, skill: TraineeSkill, seeds: &[u64]) -> Result<BenefitReport, SessionError> {
    let mut sums = [0.0; 4];
    for &seed in seeds {
        for (k, assist) in [false, true].into_iter().enumerate() {
            let config = SessionConfig {
                task,
                condition: FlightCondition::Normal,
                assist,
                seed,
                skill,
                ..SessionConfig::default()
            };
            let log = run_session(&config)?.log;
            let m = metrics_of_log(&log).unwrap_or_default();
            sums[k] += m.bank_in_band_proportion.unwrap_or(0.0);
            sums[2 + k] += m.altitude_in_band_proportion.unwrap_or(0.0);
        }
    }
    let n = seeds.len().max(1) as f64;
    Ok(BenefitReport {
        task,
        seeds: seeds.to_vec(),
        skill,
        bank_off: sums[0] / n,
        bank_on: sums[1] / n,
        altitude_off: sums[2] / n,
        altitude_on: sums[3] / n,
    })
}
