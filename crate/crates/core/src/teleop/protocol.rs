//! JSON messages exchanged between the live service and its clients. Every
//! message is one UTF-8 JSON object with a `type` field.

use serde::{Deserialize, Serialize};

use crate::bilayer::JawState;
use crate::geometry::Convex;
use crate::mating::{MatingPhase, Transition};
use crate::world::{BodyId, BodyKind, Channel, DetachBlock};

pub const PROTOCOL_SCHEMA_VERSION: u32 = 1;

/// Hard cap on an encoded telemetry frame.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        schema_version: u32,
        #[serde(default)]
        client: Option<String>,
    },
    AcquireDriver,
    ReleaseDriver,
    Command { client_seq: u64, command: OperatorCommand },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorCommand {
    /// Coil gradient (T/m) and field rotation rate (rad/s) for one base;
    /// `base` defaults to the first base in the world.
    Joystick {
        grad_x: f64,
        grad_y: f64,
        #[serde(default)]
        rotate_rate: f64,
        #[serde(default)]
        base: Option<BodyId>,
    },
    SolventTarget { water_fraction: f64 },
    LoadScenario { name: String },
    Pause { paused: bool },
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Ask whether a locked pair can separate now.
    Detach { base: BodyId, effector: BodyId },
}

impl OperatorCommand {
    /// Commands that change the world and therefore need the driver token.
    pub fn needs_driver(&self) -> bool {
        !matches!(self, OperatorCommand::Detach { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(ServerHello),
    Scene(Scene),
    Telemetry(TelemetryFrame),
    Ack { client_seq: u64 },
    Driver { granted: bool, holder: Option<u64> },
    DetachResult {
        client_seq: u64,
        base: BodyId,
        effector: BodyId,
        feasible: bool,
        reason: Option<DetachReason>,
    },
    Error {
        code: ErrorCode,
        message: String,
        #[serde(default)]
        client_seq: Option<u64>,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>, client_seq: Option<u64>) -> Self {
        ServerMessage::Error { code, message: message.into(), client_seq }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerHello {
    pub schema_version: u32,
    pub server: String,
    pub version: String,
    pub session: u64,
    pub tick_hz: f64,
    pub telemetry_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetachReason {
    SurfaceTensionAdhesion,
    JawsNotOpen,
    NotMated,
}

impl From<DetachBlock> for DetachReason {
    fn from(b: DetachBlock) -> Self {
        match b {
            DetachBlock::SurfaceTensionAdhesion => DetachReason::SurfaceTensionAdhesion,
            DetachBlock::JawsNotOpen => DetachReason::JawsNotOpen,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedMessage,
    VersionMismatch,
    HelloRequired,
    NotDriver,
    StaleSequence,
    UnknownScenario,
    InvalidCommand,
}

/// Static geometry, sent on connect and whenever the world is rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub channel: Channel,
    pub bodies: Vec<SceneBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBody {
    pub id: BodyId,
    pub kind: BodyKind,
    /// Convex pieces in the body frame, µm.
    pub shape: Vec<Convex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub time: f64,
    pub tick: u64,
    pub paused: bool,
    pub bodies: Vec<BodyTelemetry>,
    pub water_fraction: f64,
    pub water_fraction_target: f64,
    pub mating_states: Vec<PairTelemetry>,
    /// Transitions since the previous frame.
    pub transitions: Vec<Transition>,
    pub tick_rate_actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyTelemetry {
    pub id: BodyId,
    pub kind: BodyKind,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub lambda: Option<f64>,
    pub aperture_um: Option<f64>,
    pub jaw_state: Option<JawState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTelemetry {
    pub base: BodyId,
    pub effector: BodyId,
    pub state: MatingPhase,
    pub locked: bool,
    pub can_insert: bool,
    pub interference_locked: bool,
    pub inside: bool,
    /// Side walls hold the effector against rotation.
    pub walls_constrain: bool,
}

/// Parse a client frame; the error text is sent back in a
/// `malformed_message` error.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}
