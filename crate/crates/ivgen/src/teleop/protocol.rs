//! Wire messages. One JSON object per WebSocket text frame, tagged by
//! `type`. All quantities in SI units.

use ivgen_core::geom::{DeltaAction, GripperCommand, Vec3};
use ivgen_core::world::{FrameDescriptor, TaskId};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Close code sent when the client speaks another protocol version.
pub const CLOSE_VERSION_MISMATCH: u16 = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Policy,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeCommand {
    Start,
    Abort,
}

/// A planar delta command as sent by the client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionFields {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub grip: GripperCommand,
}

impl ActionFields {
    pub fn to_action(self) -> DeltaAction {
        DeltaAction { translation: Vec3::new(self.dx, self.dy, self.dz), rotation: Vec3::ZERO, gripper: self.grip }
    }

    pub fn from_action(a: &DeltaAction) -> ActionFields {
        ActionFields { dx: a.translation.x, dy: a.translation.y, dz: a.translation.z, grip: a.gripper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello { version: u32 },
    Takeover,
    Release,
    Action {
        dx: f64,
        dy: f64,
        dz: f64,
        grip: GripperCommand,
    },
    Episode { cmd: EpisodeCommand },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    Hello {
        version: u32,
        session: u64,
        task: TaskId,
    },
    Frame {
        tick: u64,
        scene: FrameDescriptor,
        control: Control,
        episode: u64,
        subtask: u32,
    },
    EpisodeEnd {
        episode: u64,
        goal: bool,
        /// Whether the episode was appended to the session dataset.
        recorded: bool,
    },
    Ack {
        tick: u64,
        /// The stored action after clamping, for `action` messages.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        applied: Option<ActionFields>,
    },
    Error {
        code: String,
        message: String,
    },
}

const CLIENT_TYPES: [&str; 5] = ["hello", "takeover", "release", "action", "episode"];

impl ServerMessage {
    pub fn error(code: &str, message: impl Into<String>) -> ServerMessage {
        ServerMessage::Error { code: code.into(), message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client message serializes")
    }
}

/// Parses a client frame. The error is the reply to send back:
/// `unknown-type` for an unrecognised `type`, `malformed` otherwise.
pub fn parse_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ServerMessage::error("malformed", e.to_string()))?;
    let Some(ty) = value.get("type").and_then(|t| t.as_str()) else {
        return Err(ServerMessage::error("malformed", "missing string field `type`"));
    };
    if !CLIENT_TYPES.contains(&ty) {
        return Err(ServerMessage::error("unknown-type", format!("unknown message type `{ty}`")));
    }
    serde_json::from_value(value).map_err(|e| ServerMessage::error("malformed", e.to_string()))
}
