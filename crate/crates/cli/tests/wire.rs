use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread::JoinHandle;

use insitu_cli::protocol::{Action, ClientMsg, Control, Emitted, Sensor, ServerMsg};
use insitu_cli::serve::{bind, serve, SensorSource, ServeOptions};
use insitu_core::golden::{bundled, GoldenStep};
use insitu_core::mechanisms::{InputEvent, InputKind, Led, MechanismId};
use insitu_core::stream::{parse_csv, ActivityLabel, StreamMeta};

fn start_server(mechanism: MechanismId, output: PathBuf, sensor: SensorSource, sessions: usize) -> (SocketAddr, JoinHandle<()>) {
    let (tx, rx) = mpsc::channel();
    let handle = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = bind(0).await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let opts = ServeOptions {
                mechanism,
                output,
                sensor,
                websocket: false,
                seed: 1,
                max_sessions: Some(sessions),
            };
            serve(listener, opts).await.unwrap();
        });
    });
    (rx.recv().unwrap(), handle)
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: SocketAddr) -> Self {
        let writer = TcpStream::connect(addr).unwrap();
        Self {
            reader: BufReader::new(writer.try_clone().unwrap()),
            writer,
        }
    }

    fn send_line(&mut self, line: &str) -> ServerMsg {
        writeln!(self.writer, "{line}").unwrap();
        let mut reply = String::new();
        self.reader.read_line(&mut reply).unwrap();
        ServerMsg::parse(reply.trim()).unwrap()
    }

    fn send(&mut self, msg: ClientMsg) -> ServerMsg {
        self.send_line(&msg.to_line())
    }
}

fn control(action: Action, mechanism: Option<MechanismId>, t_ms: Option<u64>) -> ClientMsg {
    ClientMsg::Control(Control { action, mechanism, t_ms })
}

fn input(t: u64, kind: InputKind) -> ClientMsg {
    ClientMsg::Input(InputEvent::new(t, kind))
}

fn emitted(msg: &ServerMsg) -> Vec<Emitted> {
    match msg {
        ServerMsg::State { emitted, .. } => emitted.clone(),
        ServerMsg::Error { msg } => panic!("error frame: {msg}"),
    }
}

fn scratch(name: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    (dir, path)
}

#[test]
fn golden_vectors_replay_over_the_wire() {
    let vectors = bundled();
    for (name, v) in vectors {
        let (_dir, out) = scratch("live.csv");
        let (addr, server) = start_server(v.mechanism, out, SensorSource::Simulated, 1);
        let mut client = Client::connect(addr);
        v.check(|step| {
            let msg = match step {
                GoldenStep::Input(ev) => ClientMsg::from_input(*ev),
                GoldenStep::Flush => control(Action::Stop, None, None),
                GoldenStep::Expect(_) => unreachable!(),
            };
            match client.send(msg) {
                ServerMsg::State { emitted, .. } => Ok(emitted
                    .into_iter()
                    .map(|e| (e.t_ms, ActivityLabel::from_code(e.label as i64).unwrap()))
                    .collect()),
                ServerMsg::Error { msg } => Err(msg),
            }
        })
        .unwrap_or_else(|e| panic!("{name}: {e}"));
        drop(client);
        server.join().unwrap();
    }
}

#[test]
fn start_tap_walking_stop_labels_every_later_frame() {
    let (_dir, out) = scratch("session.csv");
    let (addr, server) = start_server(MechanismId::ThreeButton, out.clone(), SensorSource::Simulated, 1);
    let mut client = Client::connect(addr);
    let started = client.send(control(Action::Start, Some(MechanismId::App), Some(1000)));
    assert!(matches!(started, ServerMsg::State { recording: true, label: -1, .. }));
    let tapped = client.send_line(r#"{"type":"input","t_ms":1730,"kind":"tap","value":1}"#);
    assert_eq!(tapped.label(), Some(ActivityLabel::Walking));
    assert_eq!(emitted(&tapped), vec![Emitted { t_ms: 1730, label: 1 }]);
    let stopped = client.send(control(Action::Stop, None, Some(4000)));
    assert!(matches!(stopped, ServerMsg::State { recording: false, label: 1, .. }));
    drop(client);
    server.join().unwrap();

    let bundle = read_output(&out, MechanismId::App);
    assert_eq!(bundle.frames.len(), 151);
    let tap_at = 730;
    for s in bundle.fused() {
        let expected = (s.frame.t_ms >= tap_at).then_some(ActivityLabel::Walking);
        assert_eq!(s.label, expected, "frame at {}", s.frame.t_ms);
    }
}

fn read_output(path: &Path, mechanism: MechanismId) -> insitu_core::stream::StreamBundle {
    let text = std::fs::read_to_string(path).unwrap();
    parse_csv(&text, StreamMeta::new("live", mechanism)).unwrap()
}

#[test]
fn force_ramp_echoes_green_yellow_red() {
    let (_dir, out) = scratch("live.csv");
    let (addr, server) = start_server(MechanismId::Touch, out, SensorSource::Simulated, 1);
    let mut client = Client::connect(addr);
    let mut leds = Vec::new();
    for (i, force) in (0..=900).step_by(25).enumerate() {
        match client.send(input(i as u64 * 50, InputKind::Force(force))) {
            ServerMsg::State { led, .. } if led != Led::Off && leds.last() != Some(&led) => leds.push(led),
            ServerMsg::State { .. } => {}
            ServerMsg::Error { msg } => panic!("{msg}"),
        }
    }
    assert_eq!(leds, [Led::Green, Led::Yellow, Led::Red]);
    drop(client);
    server.join().unwrap();
}

#[test]
fn malformed_lines_get_one_error_frame_and_the_session_continues() {
    let (_dir, out) = scratch("live.csv");
    let (addr, server) = start_server(MechanismId::ThreeButton, out, SensorSource::Simulated, 1);
    let mut client = Client::connect(addr);
    assert!(matches!(client.send_line("{not json"), ServerMsg::Error { .. }));
    assert!(matches!(client.send_line(r#"{"type":"input","t_ms":0,"kind":"force","value":3}"#), ServerMsg::Error { .. }));
    let ok = client.send(input(10, InputKind::ButtonDown(2)));
    assert_eq!(ok.label(), Some(ActivityLabel::Upstairs));
    drop(client);
    server.join().unwrap();
}

#[test]
fn client_sensor_frames_are_recorded_and_must_advance() {
    let (_dir, out) = scratch("live.csv");
    let (addr, server) = start_server(MechanismId::ThreeButton, out.clone(), SensorSource::Client, 1);
    let mut client = Client::connect(addr);
    let frame = |t| {
        ClientMsg::Sensor(Sensor {
            t_ms: t,
            v: [0.0, 0.0, 9.81, 0.0, 0.0, 0.0, 20.0, 0.0, 40.0],
        })
    };
    client.send(control(Action::Start, None, Some(500)));
    client.send(input(520, InputKind::ButtonDown(0)));
    for t in [500, 520, 540] {
        assert!(matches!(client.send(frame(t)), ServerMsg::State { .. }));
    }
    assert!(matches!(client.send(frame(540)), ServerMsg::Error { .. }));
    client.send(input(545, InputKind::ButtonDown(1)));
    client.send(frame(560));
    client.send(control(Action::Stop, None, None));
    drop(client);
    server.join().unwrap();

    let labels: Vec<_> = read_output(&out, MechanismId::ThreeButton).fused().iter().map(|s| (s.frame.t_ms, s.label)).collect();
    use ActivityLabel::*;
    assert_eq!(
        labels,
        [(0, None), (20, Some(Downstairs)), (40, Some(Downstairs)), (60, Some(Walking))]
    );
}

#[test]
fn busy_port_is_a_startup_error() {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let first = bind(0).await.unwrap();
        let port = first.local_addr().unwrap().port();
        assert!(bind(port).await.is_err());
    });
}

#[test]
fn websocket_transport_speaks_the_same_protocol() {
    use futures_util::{SinkExt, StreamExt};
    use tokio_tungstenite::tungstenite::Message;

    let (_dir, out) = scratch("live.csv");
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let listener = bind(0).await.unwrap();
        let addr = listener.local_addr().unwrap();
        let opts = ServeOptions {
            mechanism: MechanismId::App,
            output: out,
            sensor: SensorSource::Simulated,
            websocket: true,
            seed: 1,
            max_sessions: Some(1),
        };
        let server = tokio::spawn(serve(listener, opts));
        let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await.unwrap();
        let mut replies = Vec::new();
        for line in [
            r#"{"type":"control","action":"start","t_ms":0}"#,
            r#"{"type":"input","t_ms":40,"kind":"tap","value":"upstairs"}"#,
            "nonsense",
        ] {
            ws.send(Message::Text(line.into())).await.unwrap();
            let Some(Ok(Message::Text(reply))) = ws.next().await else {
                panic!("no reply")
            };
            replies.push(ServerMsg::parse(&reply).unwrap());
        }
        ws.close(None).await.unwrap();
        server.await.unwrap().unwrap();
        assert_eq!(replies[1].label(), Some(ActivityLabel::Upstairs));
        assert!(matches!(replies[2], ServerMsg::Error { .. }));
    });
}
