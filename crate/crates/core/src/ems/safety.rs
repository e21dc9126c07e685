use serde::{Deserialize, Serialize};

use super::{CalibrationProfile, Channel, EmsCommand};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyLimits {
    /// Maximum on-time fraction per channel over any rolling window.
    pub max_duty: f64,
    pub window_ms: u64,
    /// Minimum quiet time between commands on one channel.
    pub min_gap_ms: u64,
    pub max_concurrent_channels: usize,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        SafetyLimits { max_duty: 0.5, window_ms: 10_000, min_gap_ms: 250, max_concurrent_channels: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InvalidProfile,
    CeilingExceeded,
    InterCommandGap,
    ConcurrentChannels,
    DutyCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GateOutcome {
    Pass { command: EmsCommand },
    Clamped { command: EmsCommand, requested_ma: f64 },
    Rejected { reason: RejectReason },
}

impl GateOutcome {
    pub fn command(&self) -> Option<&EmsCommand> {
        match self {
            GateOutcome::Pass { command } | GateOutcome::Clamped { command, .. } => Some(command),
            GateOutcome::Rejected { .. } => None,
        }
    }

    pub fn into_command(self) -> Option<EmsCommand> {
        match self {
            GateOutcome::Pass { command } | GateOutcome::Clamped { command, .. } => Some(command),
            GateOutcome::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Issued {
    channel: Channel,
    start_ms: u64,
    end_ms: u64,
}

/// Stateful gate owned by the single device writer.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SafetyGate {
    pub limits: SafetyLimits,
    history: Vec<Issued>,
}

impl SafetyGate {
    pub fn new(limits: SafetyLimits) -> Self {
        SafetyGate { limits, history: Vec::new() }
    }

    /// Outcome for `command` given everything admitted so far, without
    /// recording it.
    pub fn check(&self, command: &EmsCommand, profile: &CalibrationProfile) -> GateOutcome {
        let reject = |reason| GateOutcome::Rejected { reason };
        if profile.validate().is_err() {
            return reject(RejectReason::InvalidProfile);
        }
        let Ok(cal) = profile.channel(command.channel) else {
            return reject(RejectReason::InvalidProfile);
        };
        if !command.peak_ma.is_finite() || command.peak_ma > profile.ceiling_ma {
            return reject(RejectReason::CeilingExceeded);
        }
        if command.envelope.samples.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return reject(RejectReason::CeilingExceeded);
        }

        let new = Issued { channel: command.channel, start_ms: command.start_ms, end_ms: command.end_ms() };
        let same: Vec<&Issued> = self.history.iter().filter(|h| h.channel == new.channel).collect();
        for h in &same {
            let too_close = if h.start_ms <= new.start_ms {
                new.start_ms < h.end_ms + self.limits.min_gap_ms
            } else {
                h.start_ms < new.end_ms + self.limits.min_gap_ms
            };
            if too_close {
                return reject(RejectReason::InterCommandGap);
            }
        }

        let mut others: Vec<Channel> = self
            .history
            .iter()
            .filter(|h| h.channel != new.channel && h.start_ms < new.end_ms && new.start_ms < h.end_ms)
            .map(|h| h.channel)
            .collect();
        others.sort();
        others.dedup();
        if others.len() + 1 > self.limits.max_concurrent_channels {
            return reject(RejectReason::ConcurrentChannels);
        }

        let mut intervals: Vec<(u64, u64)> = same.iter().map(|h| (h.start_ms, h.end_ms)).collect();
        intervals.push((new.start_ms, new.end_ms));
        if max_window_duty(&intervals, self.limits.window_ms) > self.limits.max_duty + 1e-12 {
            return reject(RejectReason::DutyCycle);
        }

        if command.peak_ma > cal.max_comfort_ma {
            let mut clamped = command.clone();
            clamped.peak_ma = cal.max_comfort_ma;
            return GateOutcome::Clamped { command: clamped, requested_ma: command.peak_ma };
        }
        GateOutcome::Pass { command: command.clone() }
    }

    /// Checks and, unless rejected, records the command.
    pub fn admit(&mut self, command: &EmsCommand, profile: &CalibrationProfile) -> GateOutcome {
        let outcome = self.check(command, profile);
        if let Some(c) = outcome.command() {
            let horizon = c.start_ms.saturating_sub(2 * self.limits.window_ms);
            self.history.retain(|h| h.end_ms >= horizon);
            self.history.push(Issued { channel: c.channel, start_ms: c.start_ms, end_ms: c.end_ms() });
        }
        outcome
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }
}

/// Largest on-time fraction of any window of length `window_ms`. The
/// maximum is attained with a window edge on an interval endpoint.
fn max_window_duty(intervals: &[(u64, u64)], window_ms: u64) -> f64 {
    let mut best = 0u64;
    for &(s, e) in intervals {
        for w0 in [s, e.saturating_sub(window_ms)] {
            let w1 = w0 + window_ms;
            let on: u64 = intervals.iter().map(|&(a, b)| b.min(w1).saturating_sub(a.max(w0))).sum();
            best = best.max(on);
        }
    }
    best as f64 / window_ms as f64
}
