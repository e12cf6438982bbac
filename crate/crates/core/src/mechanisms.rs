//! Event-driven state machines for the labelling interfaces.
//!
//! Every machine consumes [`InputEvent`]s in timestamp order and emits at most
//! one [`LabelEvent`] per input. None of them keeps a timer: anything that
//! depends on elapsed time (the two-button simultaneity window, the touch
//! hold) is resolved when the next input arrives, or by [`Machine::flush`] at
//! the end of a stream.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::{ActivityLabel, LabelEvent};

/// Largest raw reading of the 10-bit force and slider ADCs.
pub const RAW_MAX: u16 = 1023;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismId {
    TwoAdjacent,
    TwoOpposite,
    ThreeButton,
    Touch,
    Slider,
    App,
}

impl MechanismId {
    pub const ALL: [MechanismId; 6] = [
        Self::TwoAdjacent,
        Self::TwoOpposite,
        Self::ThreeButton,
        Self::Touch,
        Self::Slider,
        Self::App,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoAdjacent => "two_adjacent",
            Self::TwoOpposite => "two_opposite",
            Self::ThreeButton => "three_button",
            Self::Touch => "touch",
            Self::Slider => "slider",
            Self::App => "app",
        }
    }

    /// Human-readable name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Self::TwoAdjacent => "Two adjacent buttons",
            Self::TwoOpposite => "Two opposite buttons",
            Self::ThreeButton => "Three buttons",
            Self::Touch => "Touch",
            Self::Slider => "Slider",
            Self::App => "App",
        }
    }

    pub fn is_two_button(self) -> bool {
        matches!(self, Self::TwoAdjacent | Self::TwoOpposite)
    }
}

impl fmt::Display for MechanismId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mechanism `{s}`"))
    }
}

/// Two-button ids: button A records upstairs, button B downstairs.
pub const BUTTON_A: u8 = 0;
pub const BUTTON_B: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawInput", into = "RawInput")]
pub enum InputKind {
    ButtonDown(u8),
    ButtonUp(u8),
    Force(u16),
    Slider(u16),
    Tap(ActivityLabel),
    /// Recording control; gates the virtual app and flushes pending presses.
    Start,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: InputKind,
}

impl InputEvent {
    pub fn new(t_ms: u64, kind: InputKind) -> Self {
        Self { t_ms, kind }
    }
}

/// JSON shape of an input: `{"kind": "force", "value": 512}`.
#[derive(Serialize, Deserialize)]
struct RawInput {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<serde_json::Value>,
}

impl TryFrom<RawInput> for InputKind {
    type Error = String;

    fn try_from(raw: RawInput) -> Result<Self, Self::Error> {
        let int = |v: &Option<serde_json::Value>| -> Result<u64, String> {
            v.as_ref()
                .and_then(|v| v.as_u64())
                .ok_or_else(|| format!("`{}` needs a non-negative integer value", raw.kind))
        };
        let raw_reading = |v| -> Result<u16, String> {
            let x = int(v)?;
            if x > RAW_MAX as u64 {
                return Err(format!("raw reading {x} exceeds {RAW_MAX}"));
            }
            Ok(x as u16)
        };
        let button = |v| -> Result<u8, String> {
            u8::try_from(int(v)?).map_err(|_| "button id out of range".to_string())
        };
        Ok(match raw.kind.as_str() {
            "button_down" => Self::ButtonDown(button(&raw.value)?),
            "button_up" => Self::ButtonUp(button(&raw.value)?),
            "force" => Self::Force(raw_reading(&raw.value)?),
            "slider" => Self::Slider(raw_reading(&raw.value)?),
            "tap" => {
                let label = match &raw.value {
                    Some(serde_json::Value::Number(n)) => n.as_i64().and_then(ActivityLabel::from_code),
                    Some(serde_json::Value::String(s)) => s.parse().ok(),
                    _ => None,
                };
                Self::Tap(label.ok_or("`tap` needs a label code or name")?)
            }
            "start" => Self::Start,
            "stop" => Self::Stop,
            other => return Err(format!("unknown input kind `{other}`")),
        })
    }
}

impl From<InputKind> for RawInput {
    fn from(kind: InputKind) -> Self {
        let (kind, value) = match kind {
            InputKind::ButtonDown(id) => ("button_down", Some(id as u64)),
            InputKind::ButtonUp(id) => ("button_up", Some(id as u64)),
            InputKind::Force(v) => ("force", Some(v as u64)),
            InputKind::Slider(v) => ("slider", Some(v as u64)),
            InputKind::Tap(l) => ("tap", Some(l.code() as u64)),
            InputKind::Start => ("start", None),
            InputKind::Stop => ("stop", None),
        };
        RawInput {
            kind: kind.to_string(),
            value: value.map(serde_json::Value::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Led {
    Green,
    Yellow,
    Red,
    Off,
}

impl Led {
    pub fn name(self) -> &'static str {
        match self {
            Led::Green => "green",
            Led::Yellow => "yellow",
            Led::Red => "red",
            Led::Off => "off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Adjacent,
    Opposite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoButtonConfig {
    pub simultaneity_window_ms: u64,
    pub lockout_ms: u64,
    pub placement: Placement,
}

impl Default for TwoButtonConfig {
    fn default() -> Self {
        Self {
            simultaneity_window_ms: 150,
            lockout_ms: 400,
            placement: Placement::Adjacent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TouchConfig {
    pub t1: u16,
    pub t2: u16,
    pub hold_ms: u64,
}

impl Default for TouchConfig {
    fn default() -> Self {
        Self {
            t1: 300,
            t2: 600,
            hold_ms: 200,
        }
    }
}

impl TouchConfig {
    /// Force level 0, 1 or 2 of a non-zero reading.
    pub fn level(&self, raw: u16) -> u8 {
        if raw < self.t1 {
            0
        } else if raw < self.t2 {
            1
        } else {
            2
        }
    }

    pub fn label_of_level(level: u8) -> ActivityLabel {
        match level {
            0 => ActivityLabel::Walking,
            1 => ActivityLabel::Downstairs,
            _ => ActivityLabel::Upstairs,
        }
    }

    pub fn level_of_label(label: ActivityLabel) -> u8 {
        match label {
            ActivityLabel::Walking => 0,
            ActivityLabel::Downstairs => 1,
            ActivityLabel::Upstairs => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliderConfig {
    pub b1: u16,
    pub b2: u16,
    pub hysteresis_margin: u16,
}

impl Default for SliderConfig {
    fn default() -> Self {
        Self {
            b1: 341,
            b2: 682,
            hysteresis_margin: 20,
        }
    }
}

impl SliderConfig {
    pub fn zone(&self, raw: u16) -> ActivityLabel {
        if raw < self.b1 {
            ActivityLabel::Downstairs
        } else if raw < self.b2 {
            ActivityLabel::Walking
        } else {
            ActivityLabel::Upstairs
        }
    }

    /// Half-open raw range `[lo, hi)` of a zone.
    pub fn bounds(&self, zone: ActivityLabel) -> (i32, i32) {
        match zone {
            ActivityLabel::Downstairs => (0, self.b1 as i32),
            ActivityLabel::Walking => (self.b1 as i32, self.b2 as i32),
            ActivityLabel::Upstairs => (self.b2 as i32, RAW_MAX as i32 + 1),
        }
    }

    /// A reading roughly in the middle of a zone.
    pub fn centre(&self, zone: ActivityLabel) -> u16 {
        let (lo, hi) = self.bounds(zone);
        ((lo + hi - 1) / 2) as u16
    }
}

/// Per-mechanism tunables; irrelevant sections are ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MechanismConfig {
    pub two_button: TwoButtonConfig,
    pub touch: TouchConfig,
    pub slider: SliderConfig,
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<(), MechanismError> {
        let bad = |msg: &str| Err(MechanismError::Config(msg.to_string()));
        let tb = &self.two_button;
        if tb.simultaneity_window_ms == 0 || tb.lockout_ms == 0 {
            return bad("two-button durations must be positive");
        }
        let t = &self.touch;
        if !(0 < t.t1 && t.t1 < t.t2 && t.t2 < RAW_MAX) || t.hold_ms == 0 {
            return bad("touch thresholds need 0 < t1 < t2 < 1023 and hold_ms > 0");
        }
        let s = &self.slider;
        if !(0 < s.b1 && s.b1 < s.b2 && s.b2 < RAW_MAX) {
            return bad("slider boundaries need 0 < b1 < b2 < 1023");
        }
        if 2 * s.hysteresis_margin as u32 >= (s.b2 - s.b1) as u32 {
            return bad("slider hysteresis margin must be below half the middle zone");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MechanismError {
    #[error("{mechanism} does not accept {kind:?}")]
    UnsupportedInput { mechanism: MechanismId, kind: InputKind },
    #[error("input at {t_ms} ms precedes the previous input at {last_ms} ms")]
    OutOfOrder { t_ms: u64, last_ms: u64 },
    #[error("invalid mechanism config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TwoButtonState {
    /// First button of a possible simultaneous press and its press time.
    pub pending: Option<(u8, u64)>,
    pub lockout_until: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TouchLevel {
    pub level: u8,
    pub entered_ms: u64,
    pub emitted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TouchState {
    pub current: Option<TouchLevel>,
}

impl TouchState {
    pub fn led(&self) -> Led {
        match self.current.map(|c| c.level) {
            None => Led::Off,
            Some(0) => Led::Green,
            Some(1) => Led::Yellow,
            Some(_) => Led::Red,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SliderState {
    pub zone: Option<ActivityLabel>,
}

fn two_button_label(id: u8) -> ActivityLabel {
    if id == BUTTON_A {
        ActivityLabel::Upstairs
    } else {
        ActivityLabel::Downstairs
    }
}

/// Resolves a pending single press whose window has run out before `now`.
fn expire_pending(state: &mut TwoButtonState, config: &TwoButtonConfig, now: Option<u64>) -> Option<(u64, ActivityLabel)> {
    let (id, pressed) = state.pending?;
    let deadline = pressed + config.simultaneity_window_ms;
    if now.is_some_and(|t| t <= deadline) {
        return None;
    }
    state.pending = None;
    state.lockout_until = deadline + config.lockout_ms;
    Some((deadline, two_button_label(id)))
}

pub fn step_two_button(state: &mut TwoButtonState, config: &TwoButtonConfig, event: &InputEvent) -> Option<(u64, ActivityLabel)> {
    let t = event.t_ms;
    let expired = expire_pending(state, config, Some(t));
    if t < state.lockout_until {
        return expired;
    }
    let InputKind::ButtonDown(id) = event.kind else {
        return expired;
    };
    match state.pending {
        Some((other, _)) if other != id => {
            state.pending = None;
            state.lockout_until = t + config.lockout_ms;
            Some((t, ActivityLabel::Walking))
        }
        Some(_) => expired,
        None => {
            state.pending = Some((id, t));
            expired
        }
    }
}

pub fn flush_two_button(state: &mut TwoButtonState, config: &TwoButtonConfig) -> Option<(u64, ActivityLabel)> {
    expire_pending(state, config, None)
}

pub fn step_three_button(event: &InputEvent) -> Option<(u64, ActivityLabel)> {
    match event.kind {
        InputKind::ButtonDown(id) => ActivityLabel::from_code(id as i64).map(|l| (event.t_ms, l)),
        _ => None,
    }
}

/// Force readings are treated as held until the next reading arrives.
pub fn step_touch(state: &mut TouchState, config: &TouchConfig, event: &InputEvent) -> Option<(u64, ActivityLabel)> {
    let InputKind::Force(raw) = event.kind else {
        return None;
    };
    let t = event.t_ms;
    let new_level = (raw > 0).then(|| config.level(raw));
    let mut out = None;
    if let Some(cur) = state.current.as_mut() {
        if !cur.emitted && t >= cur.entered_ms + config.hold_ms {
            cur.emitted = true;
            out = Some((cur.entered_ms + config.hold_ms, TouchConfig::label_of_level(cur.level)));
        }
        if new_level == Some(cur.level) {
            return out;
        }
    }
    state.current = new_level.map(|level| TouchLevel {
        level,
        entered_ms: t,
        emitted: false,
    });
    out
}

pub fn step_slider(state: &mut SliderState, config: &SliderConfig, event: &InputEvent) -> Option<(u64, ActivityLabel)> {
    let InputKind::Slider(raw) = event.kind else {
        return None;
    };
    let next = config.zone(raw);
    let moved = match state.zone {
        None => true,
        Some(zone) => {
            let (lo, hi) = config.bounds(zone);
            let (raw, margin) = (raw as i32, config.hysteresis_margin as i32);
            raw < lo - margin || raw >= hi + margin
        }
    };
    if !moved {
        return None;
    }
    state.zone = Some(next);
    Some((event.t_ms, next))
}

pub fn step_virtual_app(recording: &mut bool, event: &InputEvent) -> Option<(u64, ActivityLabel)> {
    match event.kind {
        InputKind::Start => *recording = true,
        InputKind::Stop => *recording = false,
        InputKind::Tap(label) if *recording => return Some((event.t_ms, label)),
        _ => {}
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MachineState {
    TwoButton(TwoButtonState),
    ThreeButton,
    Touch(TouchState),
    Slider(SliderState),
    App { recording: bool },
}

/// A labelling mechanism: identity, configuration and live state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    id: MechanismId,
    config: MechanismConfig,
    state: MachineState,
    last_t: Option<u64>,
    last_emission: Option<LabelEvent>,
}

impl Machine {
    pub fn new(id: MechanismId) -> Self {
        Self::with_config(id, MechanismConfig::default()).expect("default config is valid")
    }

    pub fn with_config(id: MechanismId, mut config: MechanismConfig) -> Result<Self, MechanismError> {
        config.validate()?;
        config.two_button.placement = match id {
            MechanismId::TwoOpposite => Placement::Opposite,
            _ => Placement::Adjacent,
        };
        let state = match id {
            MechanismId::TwoAdjacent | MechanismId::TwoOpposite => MachineState::TwoButton(TwoButtonState::default()),
            MechanismId::ThreeButton => MachineState::ThreeButton,
            MechanismId::Touch => MachineState::Touch(TouchState::default()),
            MechanismId::Slider => MachineState::Slider(SliderState::default()),
            MechanismId::App => MachineState::App { recording: false },
        };
        Ok(Self {
            id,
            config,
            state,
            last_t: None,
            last_emission: None,
        })
    }

    pub fn id(&self) -> MechanismId {
        self.id
    }

    pub fn config(&self) -> &MechanismConfig {
        &self.config
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    pub fn last_emission(&self) -> Option<LabelEvent> {
        self.last_emission
    }

    pub fn current_label(&self) -> Option<ActivityLabel> {
        self.last_emission.map(|e| e.label)
    }

    pub fn led(&self) -> Led {
        match &self.state {
            MachineState::Touch(s) => s.led(),
            _ => Led::Off,
        }
    }

    /// Checks that an input is meaningful for this mechanism.
    pub fn accepts(&self, kind: &InputKind) -> bool {
        match (self.id, kind) {
            (_, InputKind::Start | InputKind::Stop) => true,
            (MechanismId::TwoAdjacent | MechanismId::TwoOpposite, InputKind::ButtonDown(id) | InputKind::ButtonUp(id)) => {
                *id <= BUTTON_B
            }
            (MechanismId::ThreeButton, InputKind::ButtonDown(id) | InputKind::ButtonUp(id)) => *id <= 2,
            (MechanismId::Touch, InputKind::Force(v)) | (MechanismId::Slider, InputKind::Slider(v)) => *v <= RAW_MAX,
            (MechanismId::App, InputKind::Tap(_)) => true,
            _ => false,
        }
    }

    /// Feeds one input. `Stop` also flushes a pending two-button press.
    pub fn step(&mut self, event: &InputEvent) -> Result<Option<LabelEvent>, MechanismError> {
        if !self.accepts(&event.kind) {
            return Err(MechanismError::UnsupportedInput {
                mechanism: self.id,
                kind: event.kind,
            });
        }
        if let Some(last) = self.last_t {
            if event.t_ms < last {
                return Err(MechanismError::OutOfOrder {
                    t_ms: event.t_ms,
                    last_ms: last,
                });
            }
        }
        self.last_t = Some(event.t_ms);
        let out = match &mut self.state {
            MachineState::TwoButton(s) => {
                let out = step_two_button(s, &self.config.two_button, event);
                if out.is_none() && event.kind == InputKind::Stop {
                    flush_two_button(s, &self.config.two_button)
                } else {
                    out
                }
            }
            MachineState::ThreeButton => step_three_button(event),
            MachineState::Touch(s) => step_touch(s, &self.config.touch, event),
            MachineState::Slider(s) => step_slider(s, &self.config.slider, event),
            MachineState::App { recording } => step_virtual_app(recording, event),
        };
        Ok(self.record(out))
    }

    /// Resolves anything still pending at the end of a stream.
    pub fn flush(&mut self) -> Option<LabelEvent> {
        let out = match &mut self.state {
            MachineState::TwoButton(s) => flush_two_button(s, &self.config.two_button),
            _ => None,
        };
        self.record(out)
    }

    fn record(&mut self, out: Option<(u64, ActivityLabel)>) -> Option<LabelEvent> {
        let event = out.map(|(t_ms, label)| LabelEvent {
            t_ms,
            label,
            mechanism: self.id,
        });
        if event.is_some() {
            self.last_emission = event;
        }
        event
    }
}

/// Replays an input sequence through a fresh machine, flushing at the end.
pub fn replay(id: MechanismId, config: MechanismConfig, inputs: &[InputEvent]) -> Result<Vec<LabelEvent>, MechanismError> {
    let mut machine = Machine::with_config(id, config)?;
    let mut out = Vec::new();
    for ev in inputs {
        out.extend(machine.step(ev)?);
    }
    out.extend(machine.flush());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    /// Indexed by [`ActivityLabel::index`].
    pub counts: [usize; 3],
    pub total: usize,
    pub changes: usize,
    pub duration_s: f64,
    pub labels_per_min: f64,
    pub changes_per_min: f64,
}

impl LabelStats {
    pub fn count(&self, label: ActivityLabel) -> usize {
        self.counts[label.index()]
    }

    pub fn rate_per_min(&self, label: ActivityLabel) -> f64 {
        self.count(label) as f64 * 60.0 / self.duration_s
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("duration must be positive, got {0} s")]
pub struct DurationError(pub f64);

pub fn analyze_labels(events: &[LabelEvent], duration_s: f64) -> Result<LabelStats, DurationError> {
    if !(duration_s > 0.0) {
        return Err(DurationError(duration_s));
    }
    let mut counts = [0usize; 3];
    for e in events {
        counts[e.label.index()] += 1;
    }
    let changes = events.windows(2).filter(|w| w[0].label != w[1].label).count();
    let total = events.len();
    Ok(LabelStats {
        counts,
        total,
        changes,
        duration_s,
        labels_per_min: total as f64 * 60.0 / duration_s,
        changes_per_min: changes as f64 * 60.0 / duration_s,
    })
}
