use serde::{Deserialize, Serialize};

use super::{CalibrationProfile, Channel, EmsError, EmsMode};
use crate::stick::MagnitudeClass;

/// Envelope constants. The shapes are fixed; the levels are tunable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Level of the constant mode.
    pub constant_level: f64,
    /// Starting level of the rising and swell modes.
    pub base_level: f64,
    /// Peak level of the rising, swell and falling modes.
    pub peak_level: f64,
    pub sample_rate_hz: u32,
    pub default_duration_ms: u32,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            constant_level: 0.8,
            base_level: 0.4,
            peak_level: 1.0,
            sample_rate_hz: 100,
            default_duration_ms: 800,
        }
    }
}

pub const MIN_DURATION_MS: u32 = 200;
pub const MAX_DURATION_MS: u32 = 3000;

/// Sampled amplitude envelope a(t) in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformEnvelope {
    pub mode: EmsMode,
    pub duration_ms: u32,
    pub sample_rate_hz: u32,
    /// Magnitude scale applied to the unit shape.
    pub scale: f64,
    pub base_level: f64,
    pub peak_level: f64,
    pub constant_level: f64,
    /// Samples at uniform spacing including both endpoints.
    pub samples: Vec<f64>,
}

impl WaveformEnvelope {
    fn shape(&self, t_ms: f64) -> f64 {
        let period = f64::from(self.duration_ms);
        let x = (t_ms / period).clamp(0.0, 1.0);
        let span = self.peak_level - self.base_level;
        match self.mode {
            EmsMode::Constant => self.constant_level,
            EmsMode::Rising => self.base_level + span * x,
            EmsMode::Swell => self.base_level + span * (std::f64::consts::PI * x).sin(),
            EmsMode::Falling => self.peak_level - span * x,
        }
    }

    /// Closed-form amplitude at `t_ms` since the command started.
    pub fn amplitude_at(&self, t_ms: f64) -> f64 {
        (self.scale * self.shape(t_ms)).clamp(0.0, 1.0)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    /// Time of sample `i`.
    pub fn sample_time_ms(&self, i: usize) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        f64::from(self.duration_ms) * i as f64 / (n - 1) as f64
    }
}

/// Builds the envelope for `mode`. Light cues peak at 0.7 of the drive range,
/// firm cues at 1.0.
pub fn synthesize(
    mode: EmsMode,
    magnitude: MagnitudeClass,
    duration_ms: u32,
    profile: &CalibrationProfile,
    channel: Channel,
    config: &WaveformConfig,
) -> Result<WaveformEnvelope, EmsError> {
    if !(MIN_DURATION_MS..=MAX_DURATION_MS).contains(&duration_ms) {
        return Err(EmsError::InvalidDuration(duration_ms));
    }
    profile.validate()?;
    profile.channel(channel)?;
    let n = (u64::from(duration_ms) * u64::from(config.sample_rate_hz.max(1)) / 1000) as usize + 1;
    let mut env = WaveformEnvelope {
        mode,
        duration_ms,
        sample_rate_hz: config.sample_rate_hz,
        scale: magnitude.peak_scale(),
        base_level: config.base_level,
        peak_level: config.peak_level,
        constant_level: config.constant_level,
        samples: Vec::with_capacity(n.max(2)),
    };
    let n = n.max(2);
    for i in 0..n {
        let t = f64::from(duration_ms) * i as f64 / (n - 1) as f64;
        env.samples.push(env.amplitude_at(t));
    }
    Ok(env)
}
