use crc::{Crc, CRC_8_SMBUS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CalibrationProfile, Channel, EmsCommand, EmsError, EmsMode, Trigger};

pub const FRAME_LEN: usize = 8;
pub const SYNC_BYTE: u8 = 0xA5;
const FLAG_PRE_START: u8 = 0x01;

// poly 0x07, init 0x00, no reflection, no final xor
const CRC8: Crc<u8> = Crc::<u8>::new(&CRC_8_SMBUS);

pub fn crc8(bytes: &[u8]) -> u8 {
    CRC8.checksum(bytes)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame truncated: {0} of 8 bytes")]
    TruncatedFrame(usize),
    #[error("bad sync byte {0:#04x}")]
    BadSync(u8),
    #[error("bad checksum: expected {expected:#04x}, got {got:#04x}")]
    BadChecksum { expected: u8, got: u8 },
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error(transparent)]
    Ems(#[from] EmsError),
}

/// Decoded frame contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub channel: Channel,
    pub mode: EmsMode,
    /// Device units, 0..=255.
    pub peak: u8,
    pub duration_ms: u16,
    pub pre_start: bool,
}

impl FrameSummary {
    pub fn of(command: &EmsCommand, profile: &CalibrationProfile) -> Result<FrameSummary, FrameError> {
        let fraction = command.peak_fraction(profile)?;
        let duration_ms = u16::try_from(command.duration_ms())
            .map_err(|_| FrameError::InvalidField(format!("duration {} ms", command.duration_ms())))?;
        Ok(FrameSummary {
            channel: command.channel,
            mode: command.mode(),
            peak: (255.0 * fraction).round() as u8,
            duration_ms,
            pre_start: command.purpose == Trigger::PreStart,
        })
    }
}

pub fn encode_raw(summary: &FrameSummary) -> [u8; FRAME_LEN] {
    let d = summary.duration_ms.to_be_bytes();
    let mut f = [
        SYNC_BYTE,
        summary.channel.code(),
        summary.mode.number(),
        summary.peak,
        d[0],
        d[1],
        if summary.pre_start { FLAG_PRE_START } else { 0 },
        0,
    ];
    f[7] = crc8(&f[..7]);
    f
}

/// Encodes a gated command. The peak byte is `round(255 * fraction)` of the
/// channel's drive range, so a command at or below max comfort never
/// exceeds 255.
pub fn encode_frame(command: &EmsCommand, profile: &CalibrationProfile) -> Result<[u8; FRAME_LEN], FrameError> {
    Ok(encode_raw(&FrameSummary::of(command, profile)?))
}

/// Reads exactly the first 8 bytes of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<FrameSummary, FrameError> {
    if bytes.len() < FRAME_LEN {
        return Err(FrameError::TruncatedFrame(bytes.len()));
    }
    let f = &bytes[..FRAME_LEN];
    if f[0] != SYNC_BYTE {
        return Err(FrameError::BadSync(f[0]));
    }
    let expected = crc8(&f[..7]);
    if expected != f[7] {
        return Err(FrameError::BadChecksum { expected, got: f[7] });
    }
    let channel = Channel::from_code(f[1]).ok_or_else(|| FrameError::InvalidField(format!("channel {}", f[1])))?;
    let mode = EmsMode::try_from(f[2]).map_err(FrameError::InvalidField)?;
    if f[6] & !FLAG_PRE_START != 0 {
        return Err(FrameError::InvalidField(format!("flags {:#04x}", f[6])));
    }
    Ok(FrameSummary {
        channel,
        mode,
        peak: f[3],
        duration_ms: u16::from_be_bytes([f[4], f[5]]),
        pre_start: f[6] & FLAG_PRE_START != 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ems::{SafetyGate, WaveformConfig};
    use crate::stick::{Axis, Direction, MagnitudeClass, StickOp};
    use proptest::prelude::*;

    fn command(axis: Axis, dir: Direction, mag: MagnitudeClass, trigger: Trigger, dur: u32) -> EmsCommand {
        let op = StickOp::new(axis, dir, mag);
        EmsCommand::for_stick_op(&op, trigger, 3, dur, &CalibrationProfile::demo(), &WaveformConfig::default()).unwrap()
    }

    #[test]
    fn crc_matches_reference_check_value() {
        assert_eq!(crc8(b"123456789"), 0xF4);
    }

    #[test]
    fn known_frame_layout() {
        let c = command(Axis::X, Direction::Positive, MagnitudeClass::Firm, Trigger::Correction, 800);
        let f = encode_frame(&c, &CalibrationProfile::demo()).unwrap();
        assert_eq!(&f[..7], &[0xA5, 3, 2, 255, 0x03, 0x20, 0]);
        assert_eq!(f[7], crc8(&f[..7]));
        let light = command(Axis::Y, Direction::Positive, MagnitudeClass::Light, Trigger::PreStart, 800);
        let f = encode_frame(&light, &CalibrationProfile::demo()).unwrap();
        // swell peak 0.7 of drive range is 178.5 device units, a rounding tie
        assert_eq!(&f[..3], &[0xA5, 1, 3]);
        assert!(f[3] == 178 || f[3] == 179);
        assert_eq!(&f[4..7], &[0x03, 0x20, 1]);
    }

    #[test]
    fn flipped_bit_is_bad_checksum() {
        let c = command(Axis::X, Direction::Negative, MagnitudeClass::Firm, Trigger::Correction, 800);
        let mut f = encode_frame(&c, &CalibrationProfile::demo()).unwrap();
        f[3] ^= 0x10;
        assert!(matches!(decode_frame(&f), Err(FrameError::BadChecksum { .. })));
    }

    #[test]
    fn bad_sync_and_truncation() {
        let c = command(Axis::X, Direction::Negative, MagnitudeClass::Firm, Trigger::Correction, 800);
        let mut f = encode_frame(&c, &CalibrationProfile::demo()).unwrap();
        assert_eq!(decode_frame(&f[..5]), Err(FrameError::TruncatedFrame(5)));
        f[0] = 0xA4;
        assert_eq!(decode_frame(&f), Err(FrameError::BadSync(0xA4)));
    }

    #[test]
    fn decoder_ignores_trailing_bytes() {
        let c = command(Axis::Y, Direction::Negative, MagnitudeClass::Light, Trigger::Correction, 1200);
        let f = encode_frame(&c, &CalibrationProfile::demo()).unwrap();
        let mut long = f.to_vec();
        long.extend_from_slice(&[0xFF; 9]);
        assert_eq!(decode_frame(&long), decode_frame(&f));
    }

    fn arb_op() -> impl Strategy<Value = (Axis, Direction, MagnitudeClass, Trigger)> {
        (
            prop_oneof![Just(Axis::X), Just(Axis::Y)],
            prop_oneof![Just(Direction::Positive), Just(Direction::Negative)],
            prop_oneof![Just(MagnitudeClass::Light), Just(MagnitudeClass::Firm)],
            prop_oneof![Just(Trigger::PreStart), Just(Trigger::Correction)],
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip_is_identity((axis, dir, mag, trig) in arb_op(), dur in 200u32..=3000, peak in 6.0..12.0f64) {
            let p = CalibrationProfile::demo();
            let mut c = command(axis, dir, mag, trig, dur);
            c.peak_ma = peak;
            let expected = FrameSummary::of(&c, &p).unwrap();
            let got = decode_frame(&encode_frame(&c, &p).unwrap()).unwrap();
            prop_assert_eq!(got, expected);
            prop_assert_eq!(got.channel, c.channel);
            prop_assert_eq!(got.mode, c.mode());
            prop_assert_eq!(u32::from(got.duration_ms), dur);
        }

        #[test]
        fn gated_frames_never_exceed_comfort(
            (axis, dir, mag, trig) in arb_op(), dur in 200u32..=3000, peak in 0.0..30.0f64
        ) {
            let p = CalibrationProfile::demo();
            let mut c = command(axis, dir, mag, trig, dur);
            c.peak_ma = peak;
            if let Some(gated) = SafetyGate::default().check(&c, &p).into_command() {
                let f = decode_frame(&encode_frame(&gated, &p).unwrap()).unwrap();
                let cal = p.channel(gated.channel).unwrap();
                let ma = cal.current_for_fraction(f64::from(f.peak) / 255.0);
                prop_assert!(ma <= cal.max_comfort_ma + 1e-9);
            }
        }
    }
}
