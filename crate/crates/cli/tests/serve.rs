//! The live server over real sockets: handshake, telemetry rate, driver
//! token, sequence checks, malformed frames and the replay log.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use microforge::serve::{start, ServeError, ServeOptions, ServerHandle};
use microforge_core::scenario::Scenario;
use microforge_core::teleop::{ScenarioLibrary, SimSession, TeleopParams, MAX_FRAME_BYTES};
use microforge_core::{run_scenario, BodyId, EngineSettings};

const LONE_TYPE2: &str = r#"
schema_version = 1
[metadata]
name = "lone_type2"
duration = 600.0
[world]
water_fraction = 1.0
[[world.bodies]]
id = "base"
kind = "type2_base"
pose = [0.0, 0.0, 0.0]
[[world.bodies]]
id = "gripper"
kind = "end_effector_gripper"
pose = [0.0, 400.0, 0.0]
[[pairs]]
base = "base"
effector = "gripper"
"#;

fn serve(replay_dir: Option<std::path::PathBuf>) -> ServerHandle {
    let s = Scenario::from_toml(LONE_TYPE2).unwrap();
    let session =
        SimSession::new(s, EngineSettings::default(), TeleopParams::default(), ScenarioLibrary::default()).unwrap();
    start(session, ServeOptions { bind: "127.0.0.1".into(), port: 0, replay_dir }).unwrap()
}

struct Client {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl Client {
    fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_millis(20))).unwrap();
        }
        Self { ws }
    }

    fn greeted(addr: SocketAddr) -> Self {
        let mut c = Self::connect(addr);
        c.send(json!({"type": "hello", "schema_version": 1, "client": "test"}));
        let h = c.expect("hello");
        assert_eq!(h["schema_version"], 1);
        c.expect("scene");
        c
    }

    fn send(&mut self, v: Value) {
        self.send_text(v.to_string());
    }

    fn send_text(&mut self, t: String) {
        self.ws.send(Message::Text(t)).unwrap();
    }

    fn next(&mut self, deadline: Instant) -> Option<String> {
        while Instant::now() < deadline {
            match self.ws.read() {
                Ok(Message::Text(t)) => return Some(t),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(e) => panic!("socket error: {e}"),
            }
        }
        None
    }

    /// Next non-telemetry message, which must have the given type.
    fn expect(&mut self, kind: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(5);
        while let Some(t) = self.next(deadline) {
            let v: Value = serde_json::from_str(&t).unwrap();
            if v["type"] != "telemetry" {
                assert_eq!(v["type"], kind, "{v}");
                return v;
            }
        }
        panic!("no '{kind}' message within 5 s");
    }

    fn command(&mut self, seq: u64, command: Value) {
        self.send(json!({"type": "command", "client_seq": seq, "command": command}));
    }
}

#[test]
fn telemetry_arrives_at_thirty_hertz() {
    let server = serve(None);
    let mut c = Client::greeted(server.local_addr());
    // let the stream settle, then count for three seconds
    let warmup = Instant::now() + Duration::from_millis(300);
    while c.next(warmup).is_some() {}
    let start = Instant::now();
    let end = start + Duration::from_secs(3);
    let mut frames = Vec::new();
    while let Some(t) = c.next(end) {
        assert!(t.len() < MAX_FRAME_BYTES);
        let v: Value = serde_json::from_str(&t).unwrap();
        if v["type"] == "telemetry" {
            frames.push(v);
        }
    }
    let rate = frames.len() as f64 / start.elapsed().as_secs_f64();
    assert!((rate - 30.0).abs() <= 2.0, "telemetry at {rate} Hz");
    let ticks: Vec<u64> = frames.iter().map(|f| f["tick"].as_u64().unwrap()).collect();
    assert!(ticks.windows(2).all(|w| w[1] > w[0]));
    let last = frames.last().unwrap();
    assert_eq!(last["bodies"].as_array().unwrap().len(), 2);
    assert_eq!(last["mating_states"][0]["state"], "Disengaged");
    let tick_rate = last["tick_rate_actual"].as_f64().unwrap();
    assert!(tick_rate > 900.0 && tick_rate < 1100.0, "{tick_rate}");
    server.shutdown();
}

#[test]
fn handshake_rules() {
    let server = serve(None);
    let mut c = Client::connect(server.local_addr());
    c.send(json!({"type": "acquire_driver"}));
    assert_eq!(c.expect("error")["code"], "hello_required");
    c.send(json!({"type": "hello", "schema_version": 99}));
    assert_eq!(c.expect("error")["code"], "version_mismatch");
    c.send(json!({"type": "hello", "schema_version": 1}));
    c.expect("hello");
    let scene = c.expect("scene");
    assert_eq!(scene["scenario"], "lone_type2");
    assert_eq!(scene["bodies"][0]["kind"], "type2_base");
    server.shutdown();
}

#[test]
fn malformed_frames_get_an_error_and_keep_the_session() {
    let server = serve(None);
    let mut c = Client::greeted(server.local_addr());
    for bad in ["{not json", r#"{"type":"warp"}"#, r#"{"type":"command","client_seq":1,"command":{"kind":"joystick"}}"#] {
        c.send_text(bad.into());
        let e = c.expect("error");
        assert_eq!(e["code"], "malformed_message", "{bad}");
    }
    c.send(json!({"type": "acquire_driver"}));
    assert_eq!(c.expect("driver")["granted"], true);
    c.command(1, json!({"kind": "pause", "paused": true}));
    assert_eq!(c.expect("ack")["client_seq"], 1);
    server.shutdown();
}

#[test]
fn only_the_driver_may_change_the_world() {
    let server = serve(None);
    let mut a = Client::greeted(server.local_addr());
    let mut b = Client::greeted(server.local_addr());
    a.send(json!({"type": "acquire_driver"}));
    let granted = a.expect("driver");
    assert_eq!(granted["granted"], true);
    b.send(json!({"type": "acquire_driver"}));
    let refused = b.expect("driver");
    assert_eq!(refused["granted"], false);
    assert_eq!(refused["holder"], granted["holder"]);
    b.command(1, json!({"kind": "joystick", "grad_x": 1.0, "grad_y": 0.0}));
    let e = b.expect("error");
    assert_eq!(e["code"], "not_driver");
    assert_eq!(e["client_seq"], 1);
    // observers may still ask about detachment
    b.command(2, json!({"kind": "detach", "base": "base", "effector": "gripper"}));
    let d = b.expect("detach_result");
    assert_eq!(d["feasible"], false);
    assert_eq!(d["reason"], "NotMated");
    a.send(json!({"type": "release_driver"}));
    a.expect("driver");
    b.send(json!({"type": "acquire_driver"}));
    assert_eq!(b.expect("driver")["granted"], true);
    b.command(3, json!({"kind": "solvent_target", "water_fraction": 0.4}));
    b.expect("ack");
    server.shutdown();
}

#[test]
fn sequence_numbers_must_increase() {
    let server = serve(None);
    let mut c = Client::greeted(server.local_addr());
    c.send(json!({"type": "acquire_driver"}));
    c.expect("driver");
    c.command(5, json!({"kind": "pause", "paused": false}));
    c.expect("ack");
    c.command(5, json!({"kind": "pause", "paused": false}));
    assert_eq!(c.expect("error")["code"], "stale_sequence");
    c.command(4, json!({"kind": "pause", "paused": false}));
    assert_eq!(c.expect("error")["code"], "stale_sequence");
    c.command(6, json!({"kind": "solvent_target", "water_fraction": 2.0}));
    assert_eq!(c.expect("error")["code"], "invalid_command");
    c.command(7, json!({"kind": "load_scenario", "name": "missing"}));
    assert_eq!(c.expect("error")["code"], "unknown_scenario");
    server.shutdown();
}

#[test]
fn disconnecting_driver_frees_the_token() {
    let server = serve(None);
    let mut a = Client::greeted(server.local_addr());
    a.send(json!({"type": "acquire_driver"}));
    a.expect("driver");
    drop(a);
    let mut b = Client::greeted(server.local_addr());
    let deadline = Instant::now() + Duration::from_secs(3);
    loop {
        b.send(json!({"type": "acquire_driver"}));
        if b.expect("driver")["granted"] == true {
            break;
        }
        assert!(Instant::now() < deadline, "token never released");
        std::thread::sleep(Duration::from_millis(50));
    }
    server.shutdown();
}

#[test]
fn served_joystick_replays_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let server = serve(Some(dir.path().to_path_buf()));
    let mut c = Client::greeted(server.local_addr());
    c.send(json!({"type": "acquire_driver"}));
    c.expect("driver");
    c.command(1, json!({"kind": "joystick", "grad_x": 1.0, "grad_y": 0.0}));
    c.expect("ack");
    std::thread::sleep(Duration::from_secs(2));
    c.command(2, json!({"kind": "joystick", "grad_x": 0.0, "grad_y": 0.0}));
    c.expect("ack");
    std::thread::sleep(Duration::from_millis(200));
    let session = server.shutdown();

    let live = session.engine().world.state.body(&BodyId::new("base")).unwrap().pose;
    let log = session.replay_log();
    let field_ticks: Vec<f64> = log.script.iter().map(|e| e.t).collect();
    assert_eq!(field_ticks.len(), 2);
    // 1 T/m moves a Type 2 base 50 µm/s; the commanded window fixes the distance
    let window = field_ticks[1] - field_ticks[0];
    assert!((live.position.x - 50.0 * window).abs() < 1.0, "x = {} over {window} s", live.position.x);

    let written = std::fs::read_dir(dir.path()).unwrap().flatten().map(|e| e.path()).collect::<Vec<_>>();
    assert_eq!(written.len(), 1);
    let replay = Scenario::load(&written[0]).unwrap();
    let report = run_scenario(&replay, EngineSettings::default()).unwrap();
    let again = report.engine.world.state.body(&BodyId::new("base")).unwrap().pose;
    assert_eq!(live.position.x.to_bits(), again.position.x.to_bits());
    assert_eq!(live.position.y.to_bits(), again.position.y.to_bits());
    assert_eq!(live.theta.to_bits(), again.theta.to_bits());
}

#[test]
fn busy_port_is_reported() {
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port();
    let s = Scenario::from_toml(LONE_TYPE2).unwrap();
    let session =
        SimSession::new(s, EngineSettings::default(), TeleopParams::default(), ScenarioLibrary::default()).unwrap();
    let r = start(session, ServeOptions { bind: "127.0.0.1".into(), port, replay_dir: None });
    assert!(matches!(r, Err(ServeError::PortInUse(p)) if p == port));
}
