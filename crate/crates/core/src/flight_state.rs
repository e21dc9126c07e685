//! Canonical 1 Hz flight-state snapshot and the JSON-lines telemetry format.
//!
//! A telemetry line is one JSON object carrying `tick` plus the ten metric
//! keys in [`METRIC_KEYS`]. This is the contract any external simulator
//! bridge has to emit; the built-in flight model writes the same format.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Metric keys, in the order they are written to a telemetry line.
pub const METRIC_KEYS: [&str; 10] = [
    "altitude_ft",
    "pitch_deg",
    "bank_deg",
    "heading_deg",
    "ias_kt",
    "gs_kt",
    "vs_fpm",
    "accel_lon_g",
    "accel_lat_g",
    "accel_vert_g",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlightStateError {
    #[error("missing metric `{0}`")]
    MissingMetric(String),
    #[error("metric `{0}` is not a finite number")]
    NonFiniteValue(String),
    #[error("malformed telemetry line: {0}")]
    MalformedLine(String),
    #[error("tick {tick} does not follow previous tick {previous}")]
    TickRegression { tick: u64, previous: u64 },
}

/// One of the ten observable metrics of a [`FlightState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "altitude_ft")]
    Altitude,
    #[serde(rename = "pitch_deg")]
    Pitch,
    #[serde(rename = "bank_deg")]
    Bank,
    #[serde(rename = "heading_deg")]
    Heading,
    #[serde(rename = "ias_kt")]
    Ias,
    #[serde(rename = "gs_kt")]
    Gs,
    #[serde(rename = "vs_fpm")]
    Vs,
    #[serde(rename = "accel_lon_g")]
    AccelLon,
    #[serde(rename = "accel_lat_g")]
    AccelLat,
    #[serde(rename = "accel_vert_g")]
    AccelVert,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::Altitude,
        Metric::Pitch,
        Metric::Bank,
        Metric::Heading,
        Metric::Ias,
        Metric::Gs,
        Metric::Vs,
        Metric::AccelLon,
        Metric::AccelLat,
        Metric::AccelVert,
    ];

    /// Telemetry key of this metric.
    pub fn key(self) -> &'static str {
        METRIC_KEYS[self as usize]
    }

    pub fn from_key(key: &str) -> Option<Metric> {
        Metric::ALL.iter().copied().find(|m| m.key() == key)
    }

    /// Plain-language name used in queries, guidance text and voice prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Metric::Altitude => "altitude",
            Metric::Pitch => "pitch",
            Metric::Bank => "bank",
            Metric::Heading => "heading",
            Metric::Ias => "airspeed",
            Metric::Gs => "ground speed",
            Metric::Vs => "vertical speed",
            Metric::AccelLon => "longitudinal acceleration",
            Metric::AccelLat => "lateral acceleration",
            Metric::AccelVert => "vertical acceleration",
        }
    }

    /// Heading lives on the circle; deviations use the shortest signed arc.
    pub fn is_circular(self) -> bool {
        matches!(self, Metric::Heading)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One snapshot of the four metric groups: position, attitude, speed and
/// body accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    /// Seconds since session start.
    pub t: f64,
    pub altitude_ft: f64,
    /// Degrees, [-180, 180).
    pub pitch_deg: f64,
    /// Degrees, [-180, 180); positive is right wing down.
    pub bank_deg: f64,
    /// Magnetic heading, [0, 360).
    pub heading_deg: f64,
    pub ias_kt: f64,
    pub gs_kt: f64,
    pub vs_fpm: f64,
    pub accel_lon_g: f64,
    pub accel_lat_g: f64,
    pub accel_vert_g: f64,
}

impl Default for FlightState {
    fn default() -> Self {
        FlightState {
            t: 0.0,
            altitude_ft: 0.0,
            pitch_deg: 0.0,
            bank_deg: 0.0,
            heading_deg: 0.0,
            ias_kt: 0.0,
            gs_kt: 0.0,
            vs_fpm: 0.0,
            accel_lon_g: 0.0,
            accel_lat_g: 0.0,
            accel_vert_g: 1.0,
        }
    }
}

impl FlightState {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Altitude => self.altitude_ft,
            Metric::Pitch => self.pitch_deg,
            Metric::Bank => self.bank_deg,
            Metric::Heading => self.heading_deg,
            Metric::Ias => self.ias_kt,
            Metric::Gs => self.gs_kt,
            Metric::Vs => self.vs_fpm,
            Metric::AccelLon => self.accel_lon_g,
            Metric::AccelLat => self.accel_lat_g,
            Metric::AccelVert => self.accel_vert_g,
        }
    }

    fn get_mut(&mut self, metric: Metric) -> &mut f64 {
        match metric {
            Metric::Altitude => &mut self.altitude_ft,
            Metric::Pitch => &mut self.pitch_deg,
            Metric::Bank => &mut self.bank_deg,
            Metric::Heading => &mut self.heading_deg,
            Metric::Ias => &mut self.ias_kt,
            Metric::Gs => &mut self.gs_kt,
            Metric::Vs => &mut self.vs_fpm,
            Metric::AccelLon => &mut self.accel_lon_g,
            Metric::AccelLat => &mut self.accel_lat_g,
            Metric::AccelVert => &mut self.accel_vert_g,
        }
    }

    pub fn set(&mut self, metric: Metric, value: f64) {
        *self.get_mut(metric) = value;
    }

    /// Wraps angles into their canonical ranges and floors speeds at zero.
    pub fn normalized(mut self) -> Result<FlightState, FlightStateError> {
        if !self.t.is_finite() {
            return Err(FlightStateError::NonFiniteValue("t".into()));
        }
        for metric in Metric::ALL {
            if !self.get(metric).is_finite() {
                return Err(FlightStateError::NonFiniteValue(metric.key().into()));
            }
        }
        self.pitch_deg = wrap_signed_deg(self.pitch_deg);
        self.bank_deg = wrap_signed_deg(self.bank_deg);
        self.heading_deg = wrap_heading_deg(self.heading_deg);
        self.ias_kt = self.ias_kt.max(0.0);
        self.gs_kt = self.gs_kt.max(0.0);
        Ok(self)
    }

    /// Metric map in telemetry key order.
    pub fn to_metric_map(&self) -> BTreeMap<String, f64> {
        Metric::ALL.iter().map(|m| (m.key().to_string(), self.get(*m))).collect()
    }
}

/// Wraps into [-180, 180). Values already in range are returned untouched so
/// the operation is idempotent bit-for-bit.
pub fn wrap_signed_deg(deg: f64) -> f64 {
    if (-180.0..180.0).contains(&deg) {
        return deg;
    }
    let r = (deg + 180.0).rem_euclid(360.0);
    let r = if r >= 360.0 { 0.0 } else { r };
    let out = r - 180.0;
    if out >= 180.0 {
        -180.0
    } else {
        out
    }
}

/// Wraps into [0, 360).
pub fn wrap_heading_deg(deg: f64) -> f64 {
    if (0.0..360.0).contains(&deg) {
        return deg;
    }
    let r = deg.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Shortest signed arc `value - target` on the circle, in (-180, 180].
pub fn heading_delta_deg(value: f64, target: f64) -> f64 {
    let d = (value - target).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Builds a [`FlightState`] from a raw metric map (as delivered by a
/// simulator bridge). Every key in [`METRIC_KEYS`] must be present.
pub fn normalize_state<S: AsRef<str> + Ord>(raw: &BTreeMap<S, f64>) -> Result<FlightState, FlightStateError> {
    let lookup: BTreeMap<&str, f64> = raw.iter().map(|(k, v)| (k.as_ref(), *v)).collect();
    let mut state = FlightState::default();
    for metric in Metric::ALL {
        let value = *lookup.get(metric.key()).ok_or_else(|| FlightStateError::MissingMetric(metric.key().into()))?;
        if !value.is_finite() {
            return Err(FlightStateError::NonFiniteValue(metric.key().into()));
        }
        state.set(metric, value);
    }
    state.normalized()
}

/// Stick and throttle, as seen by the flight model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// [-1, 1], positive commands right roll.
    pub stick_x: f64,
    /// [-1, 1], positive is a pull (pitch up).
    pub stick_y: f64,
    /// [0, 1].
    pub throttle: f64,
}

impl ControlInput {
    pub fn new(stick_x: f64, stick_y: f64, throttle: f64) -> Self {
        ControlInput { stick_x, stick_y, throttle }.clamped()
    }

    pub fn clamped(self) -> Self {
        fn c(v: f64, lo: f64, hi: f64) -> f64 {
            if v.is_nan() {
                0.0
            } else {
                v.clamp(lo, hi)
            }
        }
        ControlInput {
            stick_x: c(self.stick_x, -1.0, 1.0),
            stick_y: c(self.stick_y, -1.0, 1.0),
            throttle: c(self.throttle, 0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TelemetrySource {
    Sim,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub tick: u64,
    pub state: FlightState,
    pub source: TelemetrySource,
}

impl TelemetryRecord {
    /// Serializes to one telemetry line (no trailing newline).
    pub fn to_line(&self) -> String {
        // written by hand to keep keys in telemetry order
        let mut line = format!("{{\"tick\":{}", self.tick);
        for metric in Metric::ALL {
            let v = Value::from(self.state.get(metric));
            line.push_str(&format!(",\"{}\":{}", metric.key(), v));
        }
        line.push('}');
        line
    }
}

/// Parses one telemetry line. `previous_tick` enforces strictly increasing
/// ticks within a stream. Parsed records are tagged as external.
pub fn parse_telemetry_line(text: &str, previous_tick: Option<u64>) -> Result<TelemetryRecord, FlightStateError> {
    let value: Value = serde_json::from_str(text.trim_end_matches(['\r', '\n']))
        .map_err(|e| FlightStateError::MalformedLine(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| FlightStateError::MalformedLine("expected a JSON object".into()))?;
    let tick = obj
        .get("tick")
        .ok_or_else(|| FlightStateError::MalformedLine("missing `tick`".into()))?
        .as_u64()
        .ok_or_else(|| FlightStateError::MalformedLine("`tick` must be a non-negative integer".into()))?;
    if let Some(previous) = previous_tick {
        if tick <= previous {
            return Err(FlightStateError::TickRegression { tick, previous });
        }
    }
    let mut raw = BTreeMap::new();
    for key in METRIC_KEYS {
        let v = obj.get(key).ok_or_else(|| FlightStateError::MissingMetric(key.into()))?;
        let n = v.as_f64().ok_or_else(|| FlightStateError::MalformedLine(format!("`{key}` is not a number")))?;
        raw.insert(key, n);
    }
    let mut state = normalize_state(&raw)?;
    state.t = tick as f64;
    Ok(TelemetryRecord { tick, state, source: TelemetrySource::External })
}

/// Streams telemetry records from a reader, one line at a time.
pub struct TelemetryReader<R> {
    inner: R,
    last_tick: Option<u64>,
    line: String,
}

impl<R: BufRead> TelemetryReader<R> {
    pub fn new(inner: R) -> Self {
        TelemetryReader { inner, last_tick: None, line: String::new() }
    }
}

impl<R: BufRead> Iterator for TelemetryReader<R> {
    type Item = Result<TelemetryRecord, FlightStateError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line.clear();
            match self.inner.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(FlightStateError::MalformedLine(e.to_string()))),
            }
            if self.line.trim().is_empty() {
                continue;
            }
            let parsed = parse_telemetry_line(&self.line, self.last_tick);
            if let Ok(rec) = &parsed {
                self.last_tick = Some(rec.tick);
            }
            return Some(parsed);
        }
    }
}
