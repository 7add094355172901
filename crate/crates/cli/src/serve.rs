//! WebSocket front end for a live simulation.
//!
//! One simulation thread owns the session and ticks it against the wall
//! clock; each connection has its own thread that decodes frames and
//! forwards them over a channel. Replies and telemetry travel back the same
//! way, so no network code ever touches the world.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use log::{debug, info, warn};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

use microforge_core::scenario::Scenario;
use microforge_core::teleop::{
    parse_client_message, ClientMessage, CommandOutcome, ErrorCode, ServerHello, ServerMessage, SessionError,
    SimSession, PROTOCOL_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub struct ServeOptions {
    pub bind: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Where replay logs of finished sessions go.
    pub replay_dir: Option<PathBuf>,
}

enum Inbound {
    Connected { conn: u64, tx: Sender<String> },
    Frame { conn: u64, text: String },
    Disconnected { conn: u64 },
}

/// A running server. Dropping it without `shutdown` leaves the threads
/// running until the process exits.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    sim: Option<JoinHandle<SimSession>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop all threads and hand back the session, e.g. for its replay log.
    pub fn shutdown(mut self) -> SimSession {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
        self.sim.take().expect("joined once").join().expect("simulation thread panicked")
    }

    /// Block until the simulation thread ends (it only ends on shutdown).
    pub fn wait(mut self) -> SimSession {
        self.sim.take().expect("joined once").join().expect("simulation thread panicked")
    }
}

pub fn start(session: SimSession, opts: ServeOptions) -> Result<ServerHandle, ServeError> {
    let listener = TcpListener::bind((opts.bind.as_str(), opts.port)).map_err(|e| {
        if e.kind() == ErrorKind::AddrInUse {
            ServeError::PortInUse(opts.port)
        } else {
            ServeError::Io(e)
        }
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = unbounded::<Inbound>();
    let accept = {
        let stop = stop.clone();
        std::thread::Builder::new().name("accept".into()).spawn(move || accept_loop(listener, tx, stop))?
    };
    let sim = {
        let stop = stop.clone();
        let replay_dir = opts.replay_dir.clone();
        std::thread::Builder::new().name("simulation".into()).spawn(move || sim_loop(session, rx, stop, replay_dir))?
    };
    info!("serving on ws://{addr}");
    Ok(ServerHandle { addr, stop, accept: Some(accept), sim: Some(sim) })
}

fn accept_loop(listener: TcpListener, inbox: Sender<Inbound>, stop: Arc<AtomicBool>) {
    let next_id = AtomicU64::new(1);
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let conn = next_id.fetch_add(1, Ordering::SeqCst);
                debug!("connection {conn} from {peer}");
                let inbox = inbox.clone();
                let stop = stop.clone();
                if let Ok(h) = std::thread::Builder::new()
                    .name(format!("conn-{conn}"))
                    .spawn(move || connection(stream, conn, inbox, stop))
                {
                    workers.push(h);
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn connection(stream: TcpStream, conn: u64, inbox: Sender<Inbound>, stop: Arc<AtomicBool>) {
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            debug!("handshake with connection {conn} failed: {e}");
            return;
        }
    };
    let _ = ws.get_ref().set_read_timeout(Some(Duration::from_millis(2)));
    let (tx, rx) = unbounded::<String>();
    if inbox.send(Inbound::Connected { conn, tx }).is_err() {
        return;
    }
    serve_connection(&mut ws, conn, &inbox, &rx, &stop);
    let _ = inbox.send(Inbound::Disconnected { conn });
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn serve_connection(
    ws: &mut WebSocket<TcpStream>,
    conn: u64,
    inbox: &Sender<Inbound>,
    outbox: &Receiver<String>,
    stop: &AtomicBool,
) {
    while !stop.load(Ordering::SeqCst) {
        while let Ok(text) = outbox.try_recv() {
            if ws.send(Message::Text(text)).is_err() {
                return;
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if inbox.send(Inbound::Frame { conn, text }).is_err() {
                    return;
                }
            }
            Ok(Message::Binary(_)) => {
                let e = ServerMessage::error(ErrorCode::MalformedMessage, "binary frames are not accepted", None);
                if ws.send(Message::Text(e.to_json())).is_err() {
                    return;
                }
            }
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}

/// Per-connection protocol state kept by the simulation thread.
struct Client {
    tx: Sender<String>,
    greeted: bool,
    last_seq: Option<u64>,
}

struct Hub {
    clients: BTreeMap<u64, Client>,
    driver: Option<u64>,
}

impl Hub {
    fn send(&self, conn: u64, msg: &ServerMessage) {
        if let Some(c) = self.clients.get(&conn) {
            let _ = c.tx.send(msg.to_json());
        }
    }

    fn broadcast(&self, msg: &ServerMessage) {
        let text = msg.to_json();
        for c in self.clients.values().filter(|c| c.greeted) {
            let _ = c.tx.send(text.clone());
        }
    }
}

fn sim_loop(
    mut session: SimSession,
    inbox: Receiver<Inbound>,
    stop: Arc<AtomicBool>,
    replay_dir: Option<PathBuf>,
) -> SimSession {
    let dt = session.dt();
    let tick_period = Duration::from_secs_f64(dt);
    let frame_period = Duration::from_secs_f64(1.0 / session.params().telemetry_hz);
    let mut hub = Hub { clients: BTreeMap::new(), driver: None };
    let start = Instant::now();
    let mut next_tick = start;
    let mut next_frame = start;
    let mut window = (start, session.engine().world.state.tick);
    let mut rate = 0.0;
    let mut epoch = 0u32;
    while !stop.load(Ordering::SeqCst) {
        while let Ok(m) = inbox.try_recv() {
            handle_inbound(&mut session, &mut hub, m, &replay_dir, &mut epoch);
        }
        let now = Instant::now();
        // catch up on missed ticks, but never spiral
        let mut done = 0;
        while next_tick <= now && done < 100 {
            if let Err(e) = session.tick() {
                warn!("simulation stopped: {e}");
                let _ = session.handle(&microforge_core::teleop::OperatorCommand::Pause { paused: true });
            }
            next_tick += tick_period;
            done += 1;
        }
        if next_tick + tick_period * 200 < now {
            next_tick = now;
        }
        if now >= next_frame {
            let elapsed = now.duration_since(window.0).as_secs_f64();
            if elapsed >= 1.0 {
                let t = session.engine().world.state.tick;
                rate = (t - window.1) as f64 / elapsed;
                window = (now, t);
            }
            let frame = ServerMessage::Telemetry(session.telemetry(rate));
            hub.broadcast(&frame);
            next_frame += frame_period;
            if next_frame < now {
                next_frame = now + frame_period;
            }
        }
        let wake = next_tick.min(next_frame);
        let now = Instant::now();
        if wake > now {
            match inbox.recv_timeout(wake - now) {
                Ok(m) => handle_inbound(&mut session, &mut hub, m, &replay_dir, &mut epoch),
                Err(crossbeam_channel::RecvTimeoutError::Timeout) => {}
                Err(crossbeam_channel::RecvTimeoutError::Disconnected) => std::thread::sleep(wake - now),
            }
        }
    }
    save_replay(&session, &replay_dir, epoch);
    session
}

fn save_replay(session: &SimSession, dir: &Option<PathBuf>, epoch: u32) {
    let Some(dir) = dir else { return };
    let log = session.replay_log();
    let path = dir.join(format!("{}_{epoch:03}.scn", log.metadata.name));
    let result = std::fs::create_dir_all(dir)
        .map_err(|e| e.to_string())
        .and_then(|_| log.to_toml().map_err(|e| e.to_string()))
        .and_then(|text| std::fs::write(&path, text).map_err(|e| e.to_string()));
    match result {
        Ok(()) => info!("replay log written to {}", path.display()),
        Err(e) => warn!("cannot write replay log {}: {e}", path.display()),
    }
}

fn hello(session: &SimSession, conn: u64) -> ServerMessage {
    ServerMessage::Hello(ServerHello {
        schema_version: PROTOCOL_SCHEMA_VERSION,
        server: "microforge".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        session: conn,
        tick_hz: 1.0 / session.dt(),
        telemetry_hz: session.params().telemetry_hz,
    })
}

fn handle_inbound(
    session: &mut SimSession,
    hub: &mut Hub,
    m: Inbound,
    replay_dir: &Option<PathBuf>,
    epoch: &mut u32,
) {
    match m {
        Inbound::Connected { conn, tx } => {
            hub.clients.insert(conn, Client { tx, greeted: false, last_seq: None });
        }
        Inbound::Disconnected { conn } => {
            hub.clients.remove(&conn);
            if hub.driver == Some(conn) {
                hub.driver = None;
            }
        }
        Inbound::Frame { conn, text } => {
            let msg = match parse_client_message(&text) {
                Ok(m) => m,
                Err(e) => {
                    hub.send(conn, &ServerMessage::error(ErrorCode::MalformedMessage, e, None));
                    return;
                }
            };
            let Some(client) = hub.clients.get_mut(&conn) else { return };
            match msg {
                ClientMessage::Hello { schema_version, .. } => {
                    if schema_version != PROTOCOL_SCHEMA_VERSION {
                        let text = format!(
                            "client speaks schema {schema_version}, server speaks {PROTOCOL_SCHEMA_VERSION}"
                        );
                        hub.send(conn, &ServerMessage::error(ErrorCode::VersionMismatch, text, None));
                        return;
                    }
                    client.greeted = true;
                    hub.send(conn, &hello(session, conn));
                    hub.send(conn, &ServerMessage::Scene(session.scene()));
                }
                _ if !client.greeted => {
                    hub.send(conn, &ServerMessage::error(ErrorCode::HelloRequired, "send hello first", None));
                }
                ClientMessage::AcquireDriver => {
                    if hub.driver.is_none() {
                        hub.driver = Some(conn);
                    }
                    let granted = hub.driver == Some(conn);
                    hub.send(conn, &ServerMessage::Driver { granted, holder: hub.driver });
                }
                ClientMessage::ReleaseDriver => {
                    if hub.driver == Some(conn) {
                        hub.driver = None;
                    }
                    hub.send(conn, &ServerMessage::Driver { granted: false, holder: hub.driver });
                }
                ClientMessage::Command { client_seq, command } => {
                    if client.last_seq.is_some_and(|last| client_seq <= last) {
                        let text = format!("client_seq {client_seq} is not above {}", client.last_seq.unwrap_or(0));
                        hub.send(conn, &ServerMessage::error(ErrorCode::StaleSequence, text, Some(client_seq)));
                        return;
                    }
                    client.last_seq = Some(client_seq);
                    if command.needs_driver() && hub.driver != Some(conn) {
                        let e = ServerMessage::error(ErrorCode::NotDriver, "acquire the driver token first", Some(client_seq));
                        hub.send(conn, &e);
                        return;
                    }
                    let rebuilds = matches!(
                        command,
                        microforge_core::teleop::OperatorCommand::LoadScenario { .. }
                            | microforge_core::teleop::OperatorCommand::Reset { .. }
                    );
                    if rebuilds {
                        save_replay(session, replay_dir, *epoch);
                    }
                    match session.handle(&command) {
                        Ok(CommandOutcome::Applied) => hub.send(conn, &ServerMessage::Ack { client_seq }),
                        Ok(CommandOutcome::SceneChanged) => {
                            *epoch += 1;
                            hub.send(conn, &ServerMessage::Ack { client_seq });
                            hub.broadcast(&ServerMessage::Scene(session.scene()));
                        }
                        Ok(CommandOutcome::Detach { feasible, reason }) => {
                            let microforge_core::teleop::OperatorCommand::Detach { base, effector } = command else {
                                unreachable!("only detach queries report feasibility")
                            };
                            hub.send(conn, &ServerMessage::DetachResult { client_seq, base, effector, feasible, reason });
                        }
                        Err(e) => {
                            let code = match e {
                                SessionError::UnknownScenario(_) => ErrorCode::UnknownScenario,
                                _ => ErrorCode::InvalidCommand,
                            };
                            hub.send(conn, &ServerMessage::error(code, e.to_string(), Some(client_seq)));
                        }
                    }
                }
            }
        }
    }
}

/// Load a scenario by path, or by name from the library directory.
pub fn resolve_scenario(arg: &str, library: &microforge_core::teleop::ScenarioLibrary) -> Result<Scenario, String> {
    let p = std::path::Path::new(arg);
    if p.is_file() {
        return Scenario::load(p).map_err(|e| e.to_string());
    }
    library.load(arg).map_err(|e| e.to_string())
}
