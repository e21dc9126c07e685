use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use anyhow::{bail, Context};

use super::device::DeviceLink;
use super::frame::{encode_raw, FrameSummary};
use super::{CalibrationProfile, Channel, ChannelCalibration, EmsMode};

/// Operator input during the ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationInput {
    Step,
    MarkPerception,
    MarkMotion,
    MarkComfort,
    Abort,
}

impl CalibrationInput {
    /// `s` or empty line steps, `p`/`m`/`c` mark, `q` aborts.
    pub fn parse(line: &str) -> Option<CalibrationInput> {
        match line.trim() {
            "" | "s" => Some(CalibrationInput::Step),
            "p" => Some(CalibrationInput::MarkPerception),
            "m" => Some(CalibrationInput::MarkMotion),
            "c" => Some(CalibrationInput::MarkComfort),
            "q" => Some(CalibrationInput::Abort),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationEvent {
    /// Deliver a test pulse at this current.
    Stimulate {
        channel: Channel,
        ma: f64,
    },
    Marked {
        channel: Channel,
        what: &'static str,
        ma: f64,
    },
    /// The input was not acceptable at this point.
    Ignored(String),
    ChannelDone {
        channel: Channel,
        calibration: ChannelCalibration,
    },
    Done(CalibrationProfile),
    Aborted,
}

#[derive(Debug, Default, Clone, Copy)]
struct Marks {
    perception: Option<f64>,
    motion: Option<f64>,
}

/// Per-channel ramp from 0 in fixed steps, recording the perception, motion
/// and comfort marks in that order.
#[derive(Debug, Clone)]
pub struct CalibrationProcedure {
    pub subject_id: String,
    pub ceiling_ma: f64,
    pub step_ma: f64,
    channels: Vec<Channel>,
    current: usize,
    level_ma: f64,
    marks: Marks,
    done: BTreeMap<Channel, ChannelCalibration>,
}

impl CalibrationProcedure {
    pub fn new(subject_id: impl Into<String>, ceiling_ma: f64, channels: &[Channel]) -> Self {
        CalibrationProcedure {
            subject_id: subject_id.into(),
            ceiling_ma,
            step_ma: 0.5,
            channels: channels.to_vec(),
            current: 0,
            level_ma: 0.0,
            marks: Marks::default(),
            done: BTreeMap::new(),
        }
    }

    pub fn channel(&self) -> Option<Channel> {
        self.channels.get(self.current).copied()
    }

    pub fn level_ma(&self) -> f64 {
        self.level_ma
    }

    fn finish_channel(&mut self, comfort: f64) -> CalibrationEvent {
        let channel = self.channels[self.current];
        let calibration = ChannelCalibration {
            perception_threshold_ma: self.marks.perception.unwrap_or(comfort),
            motion_threshold_ma: self.marks.motion.unwrap_or(comfort),
            max_comfort_ma: comfort,
        };
        self.done.insert(channel, calibration);
        self.current += 1;
        self.level_ma = 0.0;
        self.marks = Marks::default();
        CalibrationEvent::ChannelDone { channel, calibration }
    }

    pub fn profile(&self) -> Option<CalibrationProfile> {
        (self.current >= self.channels.len()).then(|| CalibrationProfile {
            subject_id: self.subject_id.clone(),
            ceiling_ma: self.ceiling_ma,
            channels: self.done.clone(),
        })
    }

    pub fn handle(&mut self, input: CalibrationInput) -> CalibrationEvent {
        let Some(channel) = self.channel() else {
            return CalibrationEvent::Ignored("calibration finished".into());
        };
        match input {
            CalibrationInput::Abort => CalibrationEvent::Aborted,
            CalibrationInput::Step => {
                let next = self.level_ma + self.step_ma;
                if next > self.ceiling_ma + 1e-9 {
                    return CalibrationEvent::Ignored(format!("ceiling {} ma reached; mark comfort", self.ceiling_ma));
                }
                self.level_ma = next;
                CalibrationEvent::Stimulate { channel, ma: next }
            }
            CalibrationInput::MarkPerception => {
                if self.marks.perception.is_some() || self.level_ma <= 0.0 {
                    return CalibrationEvent::Ignored("perception already marked or no stimulus yet".into());
                }
                self.marks.perception = Some(self.level_ma);
                CalibrationEvent::Marked { channel, what: "perception", ma: self.level_ma }
            }
            CalibrationInput::MarkMotion => match self.marks.perception {
                Some(p) if self.marks.motion.is_none() && self.level_ma > p => {
                    self.marks.motion = Some(self.level_ma);
                    CalibrationEvent::Marked { channel, what: "motion", ma: self.level_ma }
                }
                _ => CalibrationEvent::Ignored("mark perception first and step above it".into()),
            },
            CalibrationInput::MarkComfort => match self.marks.motion {
                Some(m) if self.level_ma > m => {
                    let ev = self.finish_channel(self.level_ma);
                    if self.current >= self.channels.len() {
                        return CalibrationEvent::Done(self.profile().expect("all channels done"));
                    }
                    ev
                }
                _ => CalibrationEvent::Ignored("mark motion first and step above it".into()),
            },
        }
    }
}

/// Interactive calibration: reads commands line by line from `input`,
/// pulses the device through `link` and writes prompts to `output`.
pub fn run_calibration<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    link: &mut dyn DeviceLink,
    subject_id: &str,
    ceiling_ma: f64,
) -> anyhow::Result<CalibrationProfile> {
    let mut proc = CalibrationProcedure::new(subject_id, ceiling_ma, &Channel::ALL);
    writeln!(output, "ramp in {} ma steps: [enter]/s step, p perception, m motion, c comfort, q abort", proc.step_ma)?;
    writeln!(output, "channel {}", proc.channel().expect("channels"))?;
    for line in input.lines() {
        let line = line.context("reading calibration input")?;
        let Some(cmd) = CalibrationInput::parse(&line) else {
            writeln!(output, "unknown input {line:?}")?;
            continue;
        };
        match proc.handle(cmd) {
            CalibrationEvent::Stimulate { channel, ma } => {
                let frame = encode_raw(&FrameSummary {
                    channel,
                    mode: EmsMode::Constant,
                    peak: (255.0 * ma / ceiling_ma).round().clamp(0.0, 255.0) as u8,
                    duration_ms: 500,
                    pre_start: false,
                });
                link.send(&frame).context("sending calibration pulse")?;
                writeln!(output, "{channel}: {ma:.1} ma")?;
            }
            CalibrationEvent::Marked { channel, what, ma } => writeln!(output, "{channel}: {what} at {ma:.1} ma")?,
            CalibrationEvent::Ignored(why) => writeln!(output, "ignored: {why}")?,
            CalibrationEvent::ChannelDone { channel, .. } => {
                writeln!(output, "{channel} done")?;
                if let Some(next) = proc.channel() {
                    writeln!(output, "channel {next}")?;
                }
            }
            CalibrationEvent::Done(profile) => {
                profile.validate()?;
                return Ok(profile);
            }
            CalibrationEvent::Aborted => bail!("calibration aborted"),
        }
    }
    bail!("input ended before calibration finished")
}
