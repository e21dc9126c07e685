use serde::{Deserialize, Serialize};

use super::{MetricEnvelope, TaskSpec};
use crate::flight_state::{heading_delta_deg, FlightState, Metric};

/// Tie-break order for the worst offender: altitude, bank, airspeed,
/// heading, then the remaining metrics in telemetry order.
pub fn metric_priority(metric: Metric) -> u8 {
    match metric {
        Metric::Altitude => 0,
        Metric::Bank => 1,
        Metric::Ias => 2,
        Metric::Heading => 3,
        Metric::Pitch => 4,
        Metric::Vs => 5,
        Metric::Gs => 6,
        Metric::AccelLon => 7,
        Metric::AccelLat => 8,
        Metric::AccelVert => 9,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeviation {
    pub metric: Metric,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub weight: f64,
    /// Signed `value - target`; shortest arc for heading.
    pub deviation: f64,
    pub in_band: bool,
    pub trend: bool,
}

impl MetricDeviation {
    /// Severity-weighted distance in tolerance units.
    pub fn severity(&self) -> f64 {
        self.weight * self.deviation.abs() / self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub tick: u64,
    pub phase: String,
    pub phase_index: usize,
    pub deviations: Vec<MetricDeviation>,
    pub worst: Option<Metric>,
}

impl DeviationReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricDeviation> {
        self.deviations.iter().find(|d| d.metric == metric)
    }

    pub fn worst_deviation(&self) -> Option<&MetricDeviation> {
        self.worst.and_then(|m| self.get(m))
    }

    pub fn all_in_band(&self) -> bool {
        self.deviations.iter().all(|d| d.in_band)
    }
}

fn signed_deviation(env: &MetricEnvelope, value: f64) -> f64 {
    if env.metric.is_circular() {
        heading_delta_deg(value, env.target)
    } else {
        value - env.target
    }
}

/// Evaluates a state against the envelopes of `phase_index`.
///
/// `history` holds earlier states, oldest first; only the most recent
/// `spec.history_len` are used. A metric's trend flag is raised when its
/// |deviation| grew strictly over the last `spec.trend_ticks` samples.
pub fn evaluate(
    tick: u64,
    state: &FlightState,
    spec: &TaskSpec,
    phase_index: usize,
    history: &[FlightState],
) -> DeviationReport {
    let phase = &spec.phases[phase_index.min(spec.phases.len() - 1)];
    let recent = &history[history.len().saturating_sub(spec.history_len)..];

    let deviations: Vec<MetricDeviation> = phase
        .envelopes
        .iter()
        .map(|env| {
            let value = state.get(env.metric);
            let deviation = signed_deviation(env, value);
            let mut series: Vec<f64> = recent.iter().map(|s| signed_deviation(env, s.get(env.metric)).abs()).collect();
            series.push(deviation.abs());
            let trend = series.len() >= spec.trend_ticks
                && series[series.len() - spec.trend_ticks..].windows(2).all(|w| w[1] > w[0]);
            MetricDeviation {
                metric: env.metric,
                value,
                target: env.target,
                tolerance: env.tolerance,
                weight: env.weight,
                deviation,
                in_band: deviation.abs() <= env.tolerance,
                trend,
            }
        })
        .collect();

    let worst = deviations
        .iter()
        .filter(|d| !d.in_band)
        .max_by(|a, b| {
            a.severity().total_cmp(&b.severity()).then(metric_priority(b.metric).cmp(&metric_priority(a.metric)))
        })
        .map(|d| d.metric);

    DeviationReport { tick, phase: phase.name.clone(), phase_index, deviations, worst }
}
