//! Live labelling server: one client session at a time.
//!
//! Each connection runs three tasks joined by ordered queues: a reader that
//! parses client lines, a session task that owns the mechanism and the
//! recording, and a writer that sends one reply frame per client message.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use futures_util::{SinkExt, StreamExt};
use insitu_core::mechanisms::{InputEvent, InputKind, Machine, MechanismId};
use insitu_core::simulator::{gen_activity_signal, GaitParams};
use insitu_core::stream::{emit_csv, ActivityLabel, LabelEvent, SensorFrame, StreamBundle, StreamMeta, DEFAULT_SAMPLE_RATE_HZ};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{parse_client, Action, ClientMsg, Control, Emitted, Sensor, ServerMsg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SensorSource {
    /// Frames are synthesised server-side up to each client timestamp.
    Simulated,
    /// Frames come from client `sensor` messages.
    Client,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Mechanism of a new connection until a `start` names another.
    pub mechanism: MechanismId,
    pub output: PathBuf,
    pub sensor: SensorSource,
    pub websocket: bool,
    pub seed: u64,
    /// Return after this many sessions; `None` serves forever.
    pub max_sessions: Option<usize>,
}

const SIM_BUFFER_S: f64 = 60.0;

/// Mechanism, clock and recording state of one connection.
pub struct Session {
    opts: ServeOptions,
    machine: Machine,
    recording: bool,
    frames: Vec<SensorFrame>,
    events: Vec<LabelEvent>,
    base: Option<u64>,
    last_t: u64,
    next_frame: u64,
    frame_index: usize,
    signals: BTreeMap<u8, Vec<SensorFrame>>,
}

impl Session {
    pub fn new(opts: ServeOptions) -> Self {
        Self {
            machine: Machine::new(opts.mechanism),
            opts,
            recording: false,
            frames: Vec::new(),
            events: Vec::new(),
            base: None,
            last_t: 0,
            next_frame: 0,
            frame_index: 0,
            signals: BTreeMap::new(),
        }
    }

    pub fn mechanism(&self) -> MechanismId {
        self.machine.id()
    }

    /// Session time of a client timestamp; the first timestamp seen is 0.
    fn rebase(&mut self, t: u64) -> u64 {
        let base = *self.base.get_or_insert(t);
        t.saturating_sub(base)
    }

    fn client_time(&self, t: u64) -> u64 {
        t + self.base.unwrap_or(0)
    }

    fn period_ms(&self) -> u64 {
        (1000.0 / DEFAULT_SAMPLE_RATE_HZ).round() as u64
    }

    /// Synthesises frames strictly before `t`, or up to `t` when `inclusive`.
    fn fill_simulated(&mut self, t: u64, inclusive: bool) {
        if !self.recording || self.opts.sensor != SensorSource::Simulated {
            return;
        }
        let period = self.period_ms();
        let label = self.machine.current_label().unwrap_or(ActivityLabel::Walking);
        let seed = self.opts.seed;
        let signal = self.signals.entry(label.code()).or_insert_with(|| {
            gen_activity_signal(label, SIM_BUFFER_S, &GaitParams::default(), DEFAULT_SAMPLE_RATE_HZ, seed)
        });
        while self.next_frame < t || (inclusive && self.next_frame == t) {
            let mut frame = signal[self.frame_index % signal.len()];
            frame.t_ms = self.next_frame;
            self.frames.push(frame);
            self.frame_index += 1;
            self.next_frame += period;
        }
    }

    fn feed(&mut self, kind: InputKind, t: u64) -> Result<Vec<Emitted>, String> {
        let mut out = Vec::new();
        let ev = InputEvent::new(t, kind);
        let emitted = self.machine.step(&ev).map_err(|e| e.to_string())?;
        if let Some(e) = emitted {
            if self.recording {
                self.events.push(e);
            }
            out.push(Emitted {
                t_ms: self.client_time(e.t_ms),
                label: e.label.code(),
            });
        }
        Ok(out)
    }

    fn state(&self, emitted: Vec<Emitted>) -> ServerMsg {
        ServerMsg::State {
            label: self.machine.current_label().map_or(-1, |l| l.code() as i64),
            led: self.machine.led(),
            recording: self.recording,
            emitted,
        }
    }

    /// Handles one parsed message and returns the reply frame.
    pub fn handle(&mut self, msg: Result<ClientMsg, String>) -> ServerMsg {
        let reply = match msg {
            Err(e) => Err(e),
            Ok(ClientMsg::Control(c)) => self.control(c),
            Ok(ClientMsg::Input(ev)) => self.input(ev),
            Ok(ClientMsg::Sensor(s)) => self.sensor(s),
        };
        reply.unwrap_or_else(ServerMsg::error)
    }

    fn input(&mut self, ev: InputEvent) -> Result<ServerMsg, String> {
        if !self.machine.accepts(&ev.kind) {
            return Err(format!("{} does not accept {:?}", self.machine.id(), ev.kind));
        }
        let t = self.rebase(ev.t_ms).max(self.last_t);
        self.fill_simulated(t, false);
        self.last_t = t;
        let emitted = self.feed(ev.kind, t)?;
        Ok(self.state(emitted))
    }

    fn sensor(&mut self, s: Sensor) -> Result<ServerMsg, String> {
        if self.opts.sensor != SensorSource::Client {
            return Err("sensor frames are simulated by the server in this session".into());
        }
        let frame = SensorFrame::from_values(self.rebase(s.t_ms), s.v);
        if !frame.is_finite() {
            return Err("sensor values must be finite".into());
        }
        if self.recording {
            if let Some(last) = self.frames.last() {
                if frame.t_ms <= last.t_ms {
                    return Err(format!("sensor t_ms {} is not after the previous frame", s.t_ms));
                }
            }
            self.frames.push(frame);
        }
        Ok(self.state(Vec::new()))
    }

    fn control(&mut self, c: Control) -> Result<ServerMsg, String> {
        let t = match c.t_ms {
            Some(t) => self.rebase(t).max(self.last_t),
            None => self.last_t,
        };
        match c.action {
            Action::Start => {
                if let Some(m) = c.mechanism.filter(|&m| m != self.machine.id()) {
                    self.machine = Machine::new(m);
                }
                self.last_t = t;
                self.recording = true;
                self.frames.clear();
                self.events.clear();
                self.next_frame = t;
                if let Some(label) = self.machine.current_label() {
                    self.events.push(LabelEvent {
                        t_ms: t,
                        label,
                        mechanism: self.machine.id(),
                    });
                }
                let emitted = self.feed(InputKind::Start, t)?;
                Ok(self.state(emitted))
            }
            Action::Stop => {
                self.fill_simulated(t, true);
                self.last_t = t;
                let emitted = self.feed(InputKind::Stop, t)?;
                if self.recording {
                    self.recording = false;
                    self.write_recording()?;
                }
                Ok(self.state(emitted))
            }
        }
    }

    /// The recording as a bundle; events sorted by time.
    pub fn bundle(&self) -> StreamBundle {
        let mut events = self.events.clone();
        events.sort_by_key(|e| e.t_ms);
        StreamBundle {
            meta: StreamMeta::new("live", self.machine.id()),
            frames: self.frames.clone(),
            events,
        }
    }

    fn write_recording(&self) -> Result<(), String> {
        let path = &self.opts.output;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
        }
        std::fs::write(path, emit_csv(&self.bundle())).map_err(|e| format!("writing {}: {e}", path.display()))
    }
}

/// Binds the listener; a busy port is an error here, before any session.
pub async fn bind(port: u16) -> anyhow::Result<TcpListener> {
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot listen on {addr}"))
}

pub async fn serve(listener: TcpListener, opts: ServeOptions) -> anyhow::Result<()> {
    let mut served = 0;
    while opts.max_sessions.map_or(true, |n| served < n) {
        let (stream, _) = listener.accept().await?;
        if let Err(e) = run_connection(stream, opts.clone()).await {
            eprintln!("session ended with error: {e:#}");
        }
        served += 1;
    }
    Ok(())
}

async fn run_connection(stream: TcpStream, opts: ServeOptions) -> anyhow::Result<()> {
    let (in_tx, mut in_rx) = mpsc::channel::<Result<ClientMsg, String>>(256);
    let (out_tx, mut out_rx) = mpsc::channel::<String>(256);
    let websocket = opts.websocket;
    let mut session = Session::new(opts);
    let session_task = tokio::spawn(async move {
        while let Some(msg) = in_rx.recv().await {
            if out_tx.send(session.handle(msg).to_line()).await.is_err() {
                break;
            }
        }
    });
    if websocket {
        let ws = tokio_tungstenite::accept_async(stream).await?;
        let (mut sink, mut source) = ws.split();
        let reader = tokio::spawn(async move {
            while let Some(msg) = source.next().await {
                let text = match msg {
                    Ok(Message::Text(t)) => t,
                    Ok(Message::Close(_)) | Err(_) => break,
                    Ok(_) => continue,
                };
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    if in_tx.send(parse_client(line)).await.is_err() {
                        return;
                    }
                }
            }
        });
        while let Some(line) = out_rx.recv().await {
            sink.send(Message::Text(line)).await?;
        }
        reader.await?;
    } else {
        let (read, mut write) = stream.into_split();
        let reader = tokio::spawn(async move {
            let mut lines = BufReader::new(read).lines();
            while let Ok(Some(line)) = lines.next_line().await {
                if line.trim().is_empty() {
                    continue;
                }
                if in_tx.send(parse_client(&line)).await.is_err() {
                    return;
                }
            }
        });
        while let Some(mut line) = out_rx.recv().await {
            line.push('\n');
            write.write_all(line.as_bytes()).await?;
        }
        reader.await?;
    }
    session_task.await?;
    Ok(())
}
