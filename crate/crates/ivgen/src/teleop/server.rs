use std::io;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use ivgen_core::policy::PolicyModel;
use ivgen_core::world::{CorruptionModel, TaskSpec};
use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::protocol::CloseFrame;
use tungstenite::{Message, WebSocket};

use super::protocol::{parse_client, ClientMessage, ServerMessage, CLOSE_VERSION_MISMATCH, PROTOCOL_VERSION};
use super::session::SessionState;
use crate::store;

pub const DEFAULT_TICK_HZ: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub task: TaskSpec,
    pub corruption: CorruptionModel,
    pub policy: PolicyModel,
    pub seed: u64,
    pub tick_hz: f64,
    /// Each session writes `session-<id>.jsonl` here.
    pub output_dir: PathBuf,
    /// Stop accepting after this many sessions; `None` serves forever.
    pub max_sessions: Option<usize>,
}

impl ServeConfig {
    pub fn session_path(&self, id: u64) -> PathBuf {
        self.output_dir.join(format!("session-{id}.jsonl"))
    }
}

pub fn serve(config: ServeConfig, addr: impl ToSocketAddrs) -> io::Result<()> {
    serve_listener(TcpListener::bind(addr)?, config)
}

/// Accepts connections on `listener`, one thread per session.
pub fn serve_listener(listener: TcpListener, config: ServeConfig) -> io::Result<()> {
    let config = Arc::new(config);
    log::info!("teleop server listening on {}", listener.local_addr()?);
    let mut handles = Vec::new();
    for (i, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let cfg = Arc::clone(&config);
        let id = i as u64;
        handles.push(thread::spawn(move || {
            if let Err(e) = run_session(stream, id, &cfg) {
                log::warn!("session {id}: {e}");
            }
        }));
        if config.max_sessions.is_some_and(|m| i + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("websocket: {0}")]
    Ws(#[from] tungstenite::Error),
    #[error("handshake: {0}")]
    Handshake(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("store: {0}")]
    Store(#[from] store::StoreError),
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if io.kind() == io::ErrorKind::WouldBlock)
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> Result<(), tungstenite::Error> {
    match ws.send(Message::Text(msg.to_json())) {
        Err(e) if would_block(&e) => Ok(()),
        r => r,
    }
}

/// Waits for the client's hello. Returns false if the session must end.
fn handshake(ws: &mut WebSocket<TcpStream>, session: &SessionState) -> Result<bool, SessionError> {
    loop {
        let text = match ws.read()? {
            Message::Text(t) => t,
            Message::Close(_) => return Ok(false),
            _ => continue,
        };
        match parse_client(&text) {
            Ok(ClientMessage::Hello { version }) if version == PROTOCOL_VERSION => {
                send(ws, &session.hello())?;
                return Ok(true);
            }
            Ok(ClientMessage::Hello { version }) => {
                log::info!("session {}: client protocol {version}, closing", session.id);
                ws.close(Some(CloseFrame {
                    code: CloseCode::from(CLOSE_VERSION_MISMATCH),
                    reason: format!("protocol version mismatch: server {PROTOCOL_VERSION}, client {version}").into(),
                }))?;
                // Drain until the client acknowledges the close.
                loop {
                    match ws.read() {
                        Ok(_) => {}
                        Err(_) => return Ok(false),
                    }
                }
            }
            Ok(_) => send(ws, &ServerMessage::error("expected-hello", "send hello first"))?,
            Err(reply) => send(ws, &reply)?,
        }
    }
}

fn run_session(stream: TcpStream, id: u64, cfg: &ServeConfig) -> Result<(), SessionError> {
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| SessionError::Handshake(e.to_string()))?;
    let mut session = SessionState::new(id, cfg.task.clone(), cfg.corruption, cfg.policy.clone(), cfg.seed);
    if !handshake(&mut ws, &session)? {
        return Ok(());
    }
    ws.get_mut().set_nonblocking(true)?;
    let interval = Duration::from_secs_f64(1.0 / cfg.tick_hz.max(1e-3));
    let mut next_tick = Instant::now() + interval;
    let path = cfg.session_path(id);
    loop {
        // Drain the mailbox; the latest human action wins.
        loop {
            match ws.read() {
                Ok(Message::Text(t)) => {
                    let reply = match parse_client(&t) {
                        Ok(msg) => session.handle_message(msg),
                        Err(err) => Some(err),
                    };
                    if let Some(r) = reply {
                        send(&mut ws, &r)?;
                    }
                }
                Ok(Message::Close(_)) => {
                    session.abort("client closed the connection");
                    return Ok(());
                }
                Ok(_) => {}
                Err(e) if would_block(&e) => break,
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    session.abort("client disconnected");
                    return Ok(());
                }
                Err(e) => {
                    session.abort("connection error");
                    return Err(e.into());
                }
            }
        }
        let now = Instant::now();
        if now >= next_tick {
            let before = session.recorded().len();
            for m in session.tick() {
                send(&mut ws, &m)?;
            }
            if session.recorded().len() > before {
                store::write_dataset(session.recorded(), &path)?;
                log::info!("session {id}: {} episodes in {}", session.recorded().len(), path.display());
            }
            next_tick += interval;
            if next_tick < now {
                next_tick = now + interval;
            }
        }
        match ws.flush() {
            Err(e) if !would_block(&e) => {
                session.abort("connection error");
                return Err(e.into());
            }
            _ => {}
        }
        thread::sleep(next_tick.saturating_duration_since(Instant::now()).min(Duration::from_millis(1)));
    }
}
