//! Stick operations shared by task standards, guidance packets and the EMS
//! channel mapping.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Roll axis; positive is right.
    X,
    /// Pitch axis; positive is a pull.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Positive => Direction::Negative,
            Direction::Negative => Direction::Positive,
        }
    }

    /// Direction that opposes a signed deviation. `None` for zero.
    pub fn opposing(deviation: f64) -> Option<Direction> {
        if deviation > 0.0 {
            Some(Direction::Negative)
        } else if deviation < 0.0 {
            Some(Direction::Positive)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeClass {
    Light,
    Firm,
}

impl MagnitudeClass {
    /// Fraction of the channel drive range used as envelope peak scale.
    pub fn peak_scale(self) -> f64 {
        match self {
            MagnitudeClass::Light => 0.7,
            MagnitudeClass::Firm => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StickOp {
    pub axis: Axis,
    pub direction: Direction,
    pub magnitude: MagnitudeClass,
}

impl StickOp {
    pub fn new(axis: Axis, direction: Direction, magnitude: MagnitudeClass) -> Self {
        StickOp { axis, direction, magnitude }
    }

    /// Same operation with the roll axis reversed (left/right mirror).
    pub fn mirrored(self) -> Self {
        match self.axis {
            Axis::X => StickOp { direction: self.direction.opposite(), ..self },
            Axis::Y => self,
        }
    }

    pub fn describe(&self) -> &'static str {
        match (self.axis, self.direction) {
            (Axis::X, Direction::Positive) => "stick right",
            (Axis::X, Direction::Negative) => "stick left",
            (Axis::Y, Direction::Positive) => "stick back",
            (Axis::Y, Direction::Negative) => "stick forward",
        }
    }
}

impl fmt::Display for StickOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.magnitude {
            MagnitudeClass::Light => "light",
            MagnitudeClass::Firm => "firm",
        };
        write!(f, "{} ({m})", self.describe())
    }
}
