//! Golden input→emission vectors shared with UI clients.
//!
//! A vector file is line-delimited JSON. The first object names the
//! mechanism; every later line is exactly one of:
//!
//! ```text
//! {"mechanism":"touch","config":{...},"note":"..."}      header; config and note optional
//! {"input":{"t_ms":0,"kind":"force","value":250}}        feed one input
//! {"expect":{"t_ms":200,"label":1}}                      emission caused by the preceding input
//! {"flush":true}                                         end of stream
//! ```
//!
//! Expectations must follow the input (or flush) that produces them, in
//! emission order, so replay checks both the values and where they occur.
//! `kind` is one of `button_down`, `button_up`, `force`, `slider`, `tap`,
//! `start`, `stop`; `label` is the canonical code (0 downstairs, 1 walking,
//! 2 upstairs).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::{InputEvent, Machine, MechanismConfig, MechanismId};
use crate::stream::ActivityLabel;

/// Vector files bundled with the crate, by file name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("two_adjacent.jsonl", include_str!("../golden/two_adjacent.jsonl")),
    ("two_opposite_lockout.jsonl", include_str!("../golden/two_opposite_lockout.jsonl")),
    ("three_button.jsonl", include_str!("../golden/three_button.jsonl")),
    ("touch_ramp.jsonl", include_str!("../golden/touch_ramp.jsonl")),
    ("touch_spike_and_hold.jsonl", include_str!("../golden/touch_spike_and_hold.jsonl")),
    ("slider.jsonl", include_str!("../golden/slider.jsonl")),
    ("app.jsonl", include_str!("../golden/app.jsonl")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub t_ms: u64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldenStep {
    Input(InputEvent),
    Expect(Expectation),
    Flush,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenVector {
    pub mechanism: MechanismId,
    pub config: MechanismConfig,
    pub note: Option<String>,
    pub steps: Vec<GoldenStep>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    mechanism: MechanismId,
    #[serde(default)]
    config: MechanismConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum Line {
    Input(InputEvent),
    Expect(Expectation),
    Flush(bool),
}

#[derive(Debug, Error, PartialEq)]
pub enum GoldenError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: expected {expected:?}, got {actual:?}")]
    Mismatch {
        line: usize,
        expected: Expectation,
        actual: Option<Expectation>,
    },
    #[error("line {line}: unexpected emission {actual:?}")]
    Unexpected { line: usize, actual: Expectation },
    #[error("line {line}: {msg}")]
    Machine { line: usize, msg: String },
}

impl GoldenVector {
    pub fn parse(text: &str) -> Result<Self, GoldenError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (_, first) = lines.next().ok_or(GoldenError::Syntax {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| GoldenError::Syntax {
            line: 1,
            msg: e.to_string(),
        })?;
        let mut steps = Vec::new();
        for (line, text) in lines {
            let parsed: Line =
                serde_json::from_str(text).map_err(|e| GoldenError::Syntax { line, msg: e.to_string() })?;
            steps.push(match parsed {
                Line::Input(ev) => GoldenStep::Input(ev),
                Line::Expect(x) => GoldenStep::Expect(x),
                Line::Flush(_) => GoldenStep::Flush,
            });
        }
        Ok(Self {
            mechanism: header.mechanism,
            config: header.config,
            note: header.note,
            steps,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            mechanism: self.mechanism,
            config: self.config,
            note: self.note.clone(),
        };
        let mut out = serde_json::to_string(&header).unwrap();
        out.push('\n');
        for step in &self.steps {
            let line = match step {
                GoldenStep::Input(ev) => Line::Input(*ev),
                GoldenStep::Expect(x) => Line::Expect(*x),
                GoldenStep::Flush => Line::Flush(true),
            };
            out.push_str(&serde_json::to_string(&line).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn inputs(&self) -> impl Iterator<Item = &InputEvent> {
        self.steps.iter().filter_map(|s| match s {
            GoldenStep::Input(ev) => Some(ev),
            _ => None,
        })
    }

    pub fn expectations(&self) -> impl Iterator<Item = &Expectation> {
        self.steps.iter().filter_map(|s| match s {
            GoldenStep::Expect(x) => Some(x),
            _ => None,
        })
    }

    /// Replays the vector through a fresh in-process machine.
    pub fn replay(&self) -> Result<(), GoldenError> {
        let mut machine = Machine::with_config(self.mechanism, self.config).map_err(|e| GoldenError::Machine {
            line: 1,
            msg: e.to_string(),
        })?;
        self.check(|step| match step {
            GoldenStep::Input(ev) => machine
                .step(ev)
                .map(|e| e.into_iter().map(|e| (e.t_ms, e.label)).collect())
                .map_err(|e| e.to_string()),
            GoldenStep::Flush => Ok(machine.flush().into_iter().map(|e| (e.t_ms, e.label)).collect()),
            GoldenStep::Expect(_) => unreachable!(),
        })
    }

    /// Drives any implementation of the mechanism and checks its emissions.
    /// `drive` receives each input or flush step and returns the emissions
    /// it caused, as `(t_ms, label)`.
    pub fn check<F>(&self, mut drive: F) -> Result<(), GoldenError>
    where
        F: FnMut(&GoldenStep) -> Result<Vec<(u64, ActivityLabel)>, String>,
    {
        let mut pending: std::collections::VecDeque<Expectation> = Default::default();
        // Header is line 1; steps start at line 2.
        for (i, step) in self.steps.iter().enumerate() {
            let line = i + 2;
            match step {
                GoldenStep::Expect(expected) => {
                    let actual = pending.pop_front();
                    if actual != Some(*expected) {
                        return Err(GoldenError::Mismatch {
                            line,
                            expected: *expected,
                            actual,
                        });
                    }
                }
                _ => {
                    if let Some(actual) = pending.pop_front() {
                        return Err(GoldenError::Unexpected { line, actual });
                    }
                    let emitted = drive(step).map_err(|msg| GoldenError::Machine { line, msg })?;
                    pending.extend(emitted.into_iter().map(|(t_ms, label)| {
                        Expectation {
                            t_ms,
                            label: label.code(),
                        }
                    }));
                }
            }
        }
        match pending.pop_front() {
            Some(actual) => Err(GoldenError::Unexpected {
                line: self.steps.len() + 2,
                actual,
            }),
            None => Ok(()),
        }
    }
}

pub fn bundled() -> Vec<(&'static str, GoldenVector)> {
    BUNDLED
        .iter()
        .map(|(name, text)| (*name, GoldenVector::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"))))
        .collect()
}
