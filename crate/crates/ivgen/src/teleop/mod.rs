//! Human-gated intervention server: streams live rollouts over WebSocket and
//! lets the client take control.

pub mod protocol;
mod server;
mod session;

pub use protocol::{
    parse_client, ActionFields, ClientMessage, Control, EpisodeCommand, ServerMessage, CLOSE_VERSION_MISMATCH,
    PROTOCOL_VERSION,
};
pub use server::{serve, serve_listener, ServeConfig, SessionError, DEFAULT_TICK_HZ};
pub use session::SessionState;
