//! Line-delimited JSON spoken between `serve` and a labelling client.
//!
//! Client to server:
//!
//! ```text
//! {"type":"control","action":"start","mechanism":"touch"}
//! {"type":"control","action":"stop"}
//! {"type":"input","t_ms":120,"kind":"force","value":512}
//! {"type":"sensor","t_ms":140,"v":[0,0,9.81,0,0,0,20,0,40]}
//! ```
//!
//! Server to client, one frame per client message:
//!
//! ```text
//! {"type":"state","label":1,"led":"off","recording":true,"emitted":[{"t_ms":120,"label":1}]}
//! {"type":"error","msg":"..."}
//! ```
//!
//! `emitted` lists the label events caused by the message, in the client's
//! time base. Control messages may carry an optional `t_ms`; without one they
//! are stamped with the latest time seen.

use insitu_core::mechanisms::{InputEvent, InputKind, Led, MechanismId};
use insitu_core::stream::ActivityLabel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Start,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensor {
    pub t_ms: u64,
    pub v: [f64; 9],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientMsg {
    Control(Control),
    Input(InputEvent),
    Sensor(Sensor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emitted {
    pub t_ms: u64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    State {
        /// Label code, or -1 before the first emission.
        label: i64,
        led: Led,
        recording: bool,
        emitted: Vec<Emitted>,
    },
    Error {
        msg: String,
    },
}

impl ServerMsg {
    pub fn error(msg: impl Into<String>) -> Self {
        ServerMsg::Error { msg: msg.into() }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages serialise")
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }

    pub fn label(&self) -> Option<ActivityLabel> {
        match self {
            ServerMsg::State { label, .. } => ActivityLabel::from_code(*label),
            ServerMsg::Error { .. } => None,
        }
    }
}

pub fn parse_client(line: &str) -> Result<ClientMsg, String> {
    let mut value: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object_mut().ok_or("message must be a JSON object")?;
    let ty = obj
        .remove("type")
        .and_then(|t| t.as_str().map(str::to_string))
        .ok_or("message needs a string `type`")?;
    let body = serde_json::Value::Object(std::mem::take(obj));
    let bad = |e: serde_json::Error| format!("bad `{ty}` message: {e}");
    match ty.as_str() {
        "control" => Ok(ClientMsg::Control(serde_json::from_value(body).map_err(bad)?)),
        "input" => {
            let ev: InputEvent = serde_json::from_value(body).map_err(bad)?;
            if matches!(ev.kind, InputKind::Start | InputKind::Stop) {
                return Err("start and stop are control actions, not inputs".into());
            }
            Ok(ClientMsg::Input(ev))
        }
        "sensor" => Ok(ClientMsg::Sensor(serde_json::from_value(body).map_err(bad)?)),
        other => Err(format!("unknown message type `{other}`")),
    }
}

impl ClientMsg {
    pub fn to_line(&self) -> String {
        let (ty, body) = match self {
            ClientMsg::Control(c) => ("control", serde_json::to_value(c)),
            ClientMsg::Input(ev) => ("input", serde_json::to_value(ev)),
            ClientMsg::Sensor(s) => ("sensor", serde_json::to_value(s)),
        };
        let mut body = body.expect("client messages serialise");
        body.as_object_mut()
            .expect("object")
            .insert("type".into(), serde_json::Value::from(ty));
        body.to_string()
    }

    /// The wire form of a mechanism input; `Start` and `Stop` become control
    /// messages.
    pub fn from_input(ev: InputEvent) -> Self {
        let control = |action| {
            ClientMsg::Control(Control {
                action,
                mechanism: None,
                t_ms: Some(ev.t_ms),
            })
        };
        match ev.kind {
            InputKind::Start => control(Action::Start),
            InputKind::Stop => control(Action::Stop),
            _ => ClientMsg::Input(ev),
        }
    }
}
