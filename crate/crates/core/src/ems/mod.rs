//! Kinesthetic output: calibration, the four stimulation envelopes, channel
//! mapping, safety gating and the device wire protocol.
//!
//! Amplitudes inside an envelope are fractions of a channel's drive range,
//! which runs from its motion threshold (visible contraction) to its maximum
//! comfortable current. Device units are `round(255 * fraction)`.

mod calibration;
mod device;
mod frame;
mod safety;
mod waveform;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight_state::ControlInput;
use crate::stick::{Axis, Direction, StickOp};

pub use calibration::{run_calibration, CalibrationEvent, CalibrationInput, CalibrationProcedure};
pub use device::{DeviceError, DeviceLink, LoopbackDevice, SimulatedDevice, TcpDeviceLink, ACK_BYTE, NAK_BYTE};
pub use frame::{crc8, decode_frame, encode_frame, encode_raw, FrameError, FrameSummary, FRAME_LEN, SYNC_BYTE};
pub use safety::{GateOutcome, RejectReason, SafetyGate, SafetyLimits};
pub use waveform::{synthesize, WaveformConfig, WaveformEnvelope};

/// Largest stick deflection an EMS cue may suggest; below the trainee's full
/// authority of 1.0.
pub const MAX_NUDGE: f64 = 0.35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmsError {
    #[error("duration {0} ms outside [200, 3000] ms")]
    InvalidDuration(u32),
    #[error("channel {0} has no calibration")]
    UncalibratedChannel(Channel),
    #[error("invalid calibration profile: {0}")]
    InvalidProfile(String),
}

/// Forearm muscle group driving one stick direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Fwd = 0,
    Back = 1,
    Left = 2,
    Right = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Fwd, Channel::Back, Channel::Left, Channel::Right];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Channel> {
        Channel::ALL.get(code as usize).copied()
    }

    /// Stick axis and sign this channel pushes toward.
    pub fn stick_direction(self) -> (Axis, Direction) {
        match self {
            Channel::Fwd => (Axis::Y, Direction::Negative),
            Channel::Back => (Axis::Y, Direction::Positive),
            Channel::Left => (Axis::X, Direction::Negative),
            Channel::Right => (Axis::X, Direction::Positive),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Fwd => "fwd",
            Channel::Back => "back",
            Channel::Left => "left",
            Channel::Right => "right",
        })
    }
}

/// Envelope shape: 1 constant, 2 weak-strong, 3 weak-strong-weak,
/// 4 strong-weak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum EmsMode {
    Constant = 1,
    Rising = 2,
    Swell = 3,
    Falling = 4,
}

impl EmsMode {
    pub const ALL: [EmsMode; 4] = [EmsMode::Constant, EmsMode::Rising, EmsMode::Swell, EmsMode::Falling];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for EmsMode {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(EmsMode::Constant),
            2 => Ok(EmsMode::Rising),
            3 => Ok(EmsMode::Swell),
            4 => Ok(EmsMode::Falling),
            other => Err(format!("EMS mode must be 1..=4, got {other}")),
        }
    }
}

impl From<EmsMode> for u8 {
    fn from(m: EmsMode) -> u8 {
        m.number()
    }
}

/// Why a cue is issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Start of the next maneuver phase.
    PreStart,
    /// Push against a detected deviation.
    Correction,
}

/// Initiation uses the gentle swell, corrections the rising envelope.
pub fn select_mode(trigger: Trigger) -> EmsMode {
    match trigger {
        Trigger::PreStart => EmsMode::Swell,
        Trigger::Correction => EmsMode::Rising,
    }
}

pub fn map_direction(op: &StickOp) -> Channel {
    match (op.axis, op.direction) {
        (Axis::X, Direction::Positive) => Channel::Right,
        (Axis::X, Direction::Negative) => Channel::Left,
        (Axis::Y, Direction::Positive) => Channel::Back,
        (Axis::Y, Direction::Negative) => Channel::Fwd,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCalibration {
    pub perception_threshold_ma: f64,
    pub motion_threshold_ma: f64,
    pub max_comfort_ma: f64,
}

impl ChannelCalibration {
    pub fn drive_range_ma(&self) -> f64 {
        self.max_comfort_ma - self.motion_threshold_ma
    }

    pub fn current_for_fraction(&self, fraction: f64) -> f64 {
        self.motion_threshold_ma + fraction * self.drive_range_ma()
    }

    pub fn fraction_for_current(&self, ma: f64) -> f64 {
        (ma - self.motion_threshold_ma) / self.drive_range_ma()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub subject_id: String,
    /// Hard limit no configuration may exceed.
    pub ceiling_ma: f64,
    pub channels: BTreeMap<Channel, ChannelCalibration>,
}

impl CalibrationProfile {
    /// Placeholder profile for simulated sessions.
    pub fn demo() -> Self {
        let cal = ChannelCalibration { perception_threshold_ma: 3.0, motion_threshold_ma: 6.0, max_comfort_ma: 12.0 };
        CalibrationProfile {
            subject_id: "demo".into(),
            ceiling_ma: 20.0,
            channels: Channel::ALL.iter().map(|c| (*c, cal)).collect(),
        }
    }

    pub fn channel(&self, channel: Channel) -> Result<&ChannelCalibration, EmsError> {
        self.channels.get(&channel).ok_or(EmsError::UncalibratedChannel(channel))
    }

    pub fn validate(&self) -> Result<(), EmsError> {
        let bad = |m: String| Err(EmsError::InvalidProfile(m));
        if !(self.ceiling_ma > 0.0 && self.ceiling_ma.is_finite()) {
            return bad("ceiling must be positive".into());
        }
        for (ch, c) in &self.channels {
            let ok = c.perception_threshold_ma > 0.0
                && c.perception_threshold_ma < c.motion_threshold_ma
                && c.motion_threshold_ma < c.max_comfort_ma
                && c.max_comfort_ma <= self.ceiling_ma
                && c.max_comfort_ma.is_finite();
            if !ok {
                return bad(format!(
                    "{ch}: need 0 < perception < motion < max_comfort <= ceiling, got {}/{}/{} ceiling {}",
                    c.perception_threshold_ma, c.motion_threshold_ma, c.max_comfort_ma, self.ceiling_ma
                ));
            }
        }
        Ok(())
    }
}

/// A cue ready for gating and encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmsCommand {
    pub channel: Channel,
    pub envelope: WaveformEnvelope,
    pub start_tick: u64,
    /// Absolute start on the session clock.
    pub start_ms: u64,
    pub purpose: Trigger,
    /// Current at the envelope peak.
    pub peak_ma: f64,
}

impl EmsCommand {
    /// Builds a command from a stick operation, choosing the mode from the
    /// trigger and the peak current from the profile.
    pub fn for_stick_op(
        op: &StickOp,
        trigger: Trigger,
        tick: u64,
        duration_ms: u32,
        profile: &CalibrationProfile,
        config: &WaveformConfig,
    ) -> Result<EmsCommand, EmsError> {
        let channel = map_direction(op);
        let envelope = synthesize(select_mode(trigger), op.magnitude, duration_ms, profile, channel, config)?;
        let peak_ma = profile.channel(channel)?.current_for_fraction(envelope.peak());
        Ok(EmsCommand { channel, envelope, start_tick: tick, start_ms: tick * 1000, purpose: trigger, peak_ma })
    }

    pub fn mode(&self) -> EmsMode {
        self.envelope.mode
    }

    pub fn duration_ms(&self) -> u32 {
        self.envelope.duration_ms
    }

    pub fn end_ms(&self) -> u64 {
        self.start_ms + u64::from(self.envelope.duration_ms)
    }

    pub fn is_active_at(&self, now_ms: f64) -> bool {
        now_ms >= self.start_ms as f64 && now_ms < self.end_ms() as f64
    }

    /// Peak drive fraction after calibration mapping, clamped to [0, 1].
    pub fn peak_fraction(&self, profile: &CalibrationProfile) -> Result<f64, EmsError> {
        Ok(profile.channel(self.channel)?.fraction_for_current(self.peak_ma).clamp(0.0, 1.0))
    }
}

/// Stick delta suggested by a command at its peak. Bounded by
/// [`MAX_NUDGE`] times the envelope peak fraction.
pub fn nudge_of(command: &EmsCommand) -> ControlInput {
    nudge_for(command.channel, MAX_NUDGE * command.envelope.peak())
}

/// Stick delta while the command is playing, following its envelope.
pub fn nudge_at(command: &EmsCommand, now_ms: f64) -> ControlInput {
    if !command.is_active_at(now_ms) {
        return ControlInput::default();
    }
    let t = now_ms - command.start_ms as f64;
    nudge_for(command.channel, MAX_NUDGE * command.envelope.amplitude_at(t))
}

fn nudge_for(channel: Channel, magnitude: f64) -> ControlInput {
    let (axis, dir) = channel.stick_direction();
    let v = dir.sign() * magnitude;
    match axis {
        Axis::X => ControlInput { stick_x: v, ..ControlInput::default() },
        Axis::Y => ControlInput { stick_y: v, ..ControlInput::default() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stick::MagnitudeClass;

    fn op(axis: Axis, direction: Direction) -> StickOp {
        StickOp::new(axis, direction, MagnitudeClass::Firm)
    }

    #[test]
    fn mode_selection_matches_trigger() {
        assert_eq!(select_mode(Trigger::PreStart).number(), 3);
        assert_eq!(select_mode(Trigger::Correction).number(), 2);
        let reachable: Vec<_> = [Trigger::PreStart, Trigger::Correction].map(select_mode).to_vec();
        assert!(!reachable.contains(&EmsMode::Constant));
        assert!(!reachable.contains(&EmsMode::Falling));
    }

    #[test]
    fn direction_mapping_is_a_bijection() {
        assert_eq!(map_direction(&op(Axis::X, Direction::Positive)), Channel::Right);
        let mut chans: Vec<_> = [
            op(Axis::X, Direction::Positive),
            op(Axis::X, Direction::Negative),
            op(Axis::Y, Direction::Positive),
            op(Axis::Y, Direction::Negative),
        ]
        .iter()
        .map(map_direction)
        .collect();
        chans.sort();
        chans.dedup();
        assert_eq!(chans.len(), 4);
        for ch in Channel::ALL {
            let (axis, dir) = ch.stick_direction();
            assert_eq!(map_direction(&op(axis, dir)), ch);
        }
    }

    #[test]
    fn nudge_scales_with_peak_and_magnitude() {
        let profile = CalibrationProfile::demo();
        let cfg = WaveformConfig::default();
        let firm =
            EmsCommand::for_stick_op(&op(Axis::X, Direction::Positive), Trigger::Correction, 1, 800, &profile, &cfg)
                .unwrap();
        let n = nudge_of(&firm);
        assert!((n.stick_x - MAX_NUDGE * firm.envelope.peak()).abs() < 1e-12);
        assert_eq!(n.stick_y, 0.0);

        let light_op = StickOp::new(Axis::X, Direction::Positive, MagnitudeClass::Light);
        let light = EmsCommand::for_stick_op(&light_op, Trigger::Correction, 1, 800, &profile, &cfg).unwrap();
        assert!(nudge_of(&light).stick_x.abs() < n.stick_x.abs());

        let mut zero = firm.clone();
        zero.envelope.samples.iter_mut().for_each(|s| *s = 0.0);
        zero.envelope.scale = 0.0;
        assert_eq!(nudge_of(&zero), ControlInput::default());
        assert!(nudge_of(&firm).stick_x <= MAX_NUDGE);
    }

    #[test]
    fn nudge_at_follows_envelope_and_window() {
        let profile = CalibrationProfile::demo();
        let cmd = EmsCommand::for_stick_op(
            &op(Axis::Y, Direction::Negative),
            Trigger::Correction,
            2,
            800,
            &profile,
            &WaveformConfig::default(),
        )
        .unwrap();
        assert_eq!(nudge_at(&cmd, 1999.0), ControlInput::default());
        assert!((nudge_at(&cmd, 2000.0).stick_y + MAX_NUDGE * 0.4).abs() < 1e-12);
        assert_eq!(nudge_at(&cmd, 2800.0), ControlInput::default());
    }

    #[test]
    fn profile_validation() {
        let mut p = CalibrationProfile::demo();
        assert!(p.validate().is_ok());
        p.channels.get_mut(&Channel::Left).unwrap().max_comfort_ma = 25.0;
        assert!(matches!(p.validate(), Err(EmsError::InvalidProfile(_))));
    }

    #[test]
    fn mode_serializes_as_number() {
        assert_eq!(serde_json::to_string(&EmsMode::Rising).unwrap(), "2");
        assert!(serde_json::from_str::<EmsMode>("5").is_err());
    }
}
