//! Sensor frames, label events and their fusion into labelled samples.
//!
//! The CSV layout is a compatibility contract shared with the CLI and the
//! live-labelling server:
//!
//! ```text
//! t_ms,ax,ay,az,gx,gy,gz,mx,my,mz,label
//! ```
//!
//! `label` is the canonical activity code, or `-1` for rows recorded before
//! the first label event. Floats are written with six significant digits.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::MechanismId;

/// Header line of every labelled CSV stream.
pub const CSV_HEADER: &str = "t_ms,ax,ay,az,gx,gy,gz,mx,my,mz,label";

/// Sentinel written in the label column before the first label event.
pub const UNLABELLED: i8 = -1;

/// Default nominal sample rate of a recording device, in Hz.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 50.0;

/// Significant digits kept for every float in the CSV format.
pub const CSV_SIGNIFICANT_DIGITS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Downstairs = 0,
    Walking = 1,
    Upstairs = 2,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 3] = [Self::Downstairs, Self::Walking, Self::Upstairs];
    pub const COUNT: usize = 3;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Self::Downstairs),
            1 => Some(Self::Walking),
            2 => Some(Self::Upstairs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Downstairs => "downstairs",
            Self::Walking => "walking",
            Self::Upstairs => "upstairs",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "downstairs" | "0" => Ok(Self::Downstairs),
            "walking" | "1" => Ok(Self::Walking),
            "upstairs" | "2" => Ok(Self::Upstairs),
            other => Err(format!("unknown activity label `{other}`")),
        }
    }
}

/// One 9-DOF IMU reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t_ms: u64,
    /// m/s²
    pub accel: [f64; 3],
    /// deg/s
    pub gyro: [f64; 3],
    /// µT
    pub mag: [f64; 3],
}

impl SensorFrame {
    pub const CHANNELS: usize = 9;

    pub fn from_values(t_ms: u64, v: [f64; 9]) -> Self {
        Self {
            t_ms,
            accel: [v[0], v[1], v[2]],
            gyro: [v[3], v[4], v[5]],
            mag: [v[6], v[7], v[8]],
        }
    }

    pub fn values(&self) -> [f64; 9] {
        let [ax, ay, az] = self.accel;
        let [gx, gy, gz] = self.gyro;
        let [mx, my, mz] = self.mag;
        [ax, ay, az, gx, gy, gz, mx, my, mz]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Rounds every channel to the CSV precision.
    pub fn quantized(&self) -> Self {
        Self::from_values(self.t_ms, self.values().map(quantize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub t_ms: u64,
    pub label: ActivityLabel,
    pub mechanism: MechanismId,
}

/// A frame with its forward-filled label; `None` before the first event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelledSample {
    pub frame: SensorFrame,
    pub label: Option<ActivityLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub user_id: String,
    pub mechanism: MechanismId,
    pub sample_rate_hz: f64,
}

impl StreamMeta {
    pub fn new(user_id: impl Into<String>, mechanism: MechanismId) -> Self {
        Self {
            user_id: user_id.into(),
            mechanism,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamBundle {
    pub meta: StreamMeta,
    pub frames: Vec<SensorFrame>,
    pub events: Vec<LabelEvent>,
}

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid stream metadata: {0}")]
    Meta(String),
    #[error("frame at {t_ms} ms: {msg}")]
    Frame { t_ms: u64, msg: String },
    #[error("resampling needs at least one frame")]
    EmptyInput,
    #[error("target rate must be positive, got {0}")]
    BadRate(f64),
}

impl StreamBundle {
    pub fn new(meta: StreamMeta) -> Self {
        Self {
            meta,
            frames: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Builds a bundle from per-frame labels; events become the label
    /// change-points, stamped with the frame time at which each run starts.
    pub fn from_labelled(meta: StreamMeta, samples: &[LabelledSample]) -> Self {
        let mechanism = meta.mechanism;
        let mut events = Vec::new();
        let mut last = None;
        for s in samples {
            if let Some(label) = s.label {
                if last != Some(label) {
                    events.push(LabelEvent {
                        t_ms: s.frame.t_ms,
                        label,
                        mechanism,
                    });
                    last = Some(label);
                }
            }
        }
        Self {
            meta,
            frames: samples.iter().map(|s| s.frame).collect(),
            events,
        }
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.meta.user_id.is_empty() {
            return Err(StreamError::Meta("user id is empty".into()));
        }
        if !(self.meta.sample_rate_hz > 0.0) {
            return Err(StreamError::Meta(format!(
                "sample rate must be positive, got {}",
                self.meta.sample_rate_hz
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if !f.is_finite() {
                return Err(StreamError::Frame {
                    t_ms: f.t_ms,
                    msg: "non-finite channel value".into(),
                });
            }
            if i > 0 && self.frames[i - 1].t_ms >= f.t_ms {
                return Err(StreamError::Frame {
                    t_ms: f.t_ms,
                    msg: "timestamps not strictly increasing".into(),
                });
            }
        }
        if self.events.windows(2).any(|w| w[0].t_ms > w[1].t_ms) {
            return Err(StreamError::Meta("label events out of order".into()));
        }
        Ok(())
    }

    pub fn fused(&self) -> Vec<LabelledSample> {
        fuse(&self.frames, &self.events)
    }
}

/// Rounds to [`CSV_SIGNIFICANT_DIGITS`] significant digits.
pub fn quantize(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", CSV_SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn write_float(out: &mut String, x: f64) {
    // Shortest representation of the rounded value; reparses to the same bits.
    write!(out, "{}", quantize(x)).expect("writing to a String cannot fail");
}

/// Labels each frame with the latest event at or before its timestamp.
pub fn fuse(frames: &[SensorFrame], events: &[LabelEvent]) -> Vec<LabelledSample> {
    let mut next = 0;
    let mut current = None;
    frames
        .iter()
        .map(|frame| {
            while next < events.len() && events[next].t_ms <= frame.t_ms {
                current = Some(events[next].label);
                next += 1;
            }
            LabelledSample {
                frame: *frame,
                label: current,
            }
        })
        .collect()
}

/// Writes the fused stream in the canonical CSV layout.
pub fn emit_csv(bundle: &StreamBundle) -> String {
    emit_samples(&bundle.fused())
}

pub fn emit_samples(samples: &[LabelledSample]) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in samples {
        write!(out, "{}", s.frame.t_ms).unwrap();
        for v in s.frame.values() {
            out.push(',');
            write_float(&mut out, v);
        }
        match s.label {
            Some(l) => write!(out, ",{}\n", l.code()).unwrap(),
            None => write!(out, ",{UNLABELLED}\n").unwrap(),
        }
    }
    out
}

/// Parses a labelled CSV stream into samples, one per data row.
pub fn parse_samples(text: &str) -> Result<Vec<LabelledSample>, StreamError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == CSV_HEADER => {}
        Some(_) => {
            return Err(StreamError::Parse {
                line: 1,
                msg: format!("expected header `{CSV_HEADER}`"),
            })
        }
        None => {
            return Err(StreamError::Parse {
                line: 1,
                msg: "missing header".into(),
            })
        }
    }

    let mut samples: Vec<LabelledSample> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let err = |msg: String| StreamError::Parse { line, msg };
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 11 {
            return Err(err(format!("expected 11 fields, found {}", fields.len())));
        }
        let t_ms: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad timestamp `{}`", fields[0])))?;
        let mut v = [0.0; 9];
        for (slot, field) in v.iter_mut().zip(&fields[1..10]) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(format!("non-numeric value `{field}`")))?;
            if !x.is_finite() {
                return Err(err(format!("non-finite value `{field}`")));
            }
            *slot = x;
        }
        let code: i64 = fields[10]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad label `{}`", fields[10])))?;
        let label = if code == UNLABELLED as i64 {
            None
        } else {
            Some(ActivityLabel::from_code(code).ok_or_else(|| err(format!("label {code} outside {{-1,0,1,2}}")))?)
        };
        if let Some(prev) = samples.last() {
            if t_ms <= prev.frame.t_ms {
                return Err(err(format!("non-monotone timestamp at line {line}")));
            }
            if prev.label.is_some() && label.is_none() {
                return Err(err("unlabelled row after the first label".into()));
            }
        }
        samples.push(LabelledSample {
            frame: SensorFrame::from_values(t_ms, v),
            label,
        });
    }
    Ok(samples)
}

/// Parses a CSV stream. The file carries no metadata, so the caller supplies
/// it; label events are reconstructed as change-points of the label column.
pub fn parse_csv(text: &str, meta: StreamMeta) -> Result<StreamBundle, StreamError> {
    let samples = parse_samples(text)?;
    let bundle = StreamBundle::from_labelled(meta, &samples);
    bundle.validate()?;
    Ok(bundle)
}

/// Zero-order-hold resampling onto a uniform grid starting at the first frame.
pub fn resample_hold(frames: &[SensorFrame], target_rate_hz: f64) -> Result<Vec<SensorFrame>, StreamError> {
    if !(target_rate_hz > 0.0) || !target_rate_hz.is_finite() {
        return Err(StreamError::BadRate(target_rate_hz));
    }
    let first = frames.first().ok_or(StreamError::EmptyInput)?;
    let last_t = frames.last().map(|f| f.t_ms).unwrap_or(first.t_ms);
    let period = 1000.0 / target_rate_hz;
    let mut out = Vec::new();
    let mut src = 0;
    for k in 0u64.. {
        let t = first.t_ms + (k as f64 * period).round() as u64;
        if t > last_t {
            break;
        }
        while src + 1 < frames.len() && frames[src + 1].t_ms <= t {
            src += 1;
        }
        out.push(SensorFrame { t_ms: t, ..frames[src] });
    }
    Ok(out)
}
