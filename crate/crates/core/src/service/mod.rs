// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! A playback session behind a message protocol.
//!
//! [`Controller`] turns client messages into session operations and session
//! changes into outgoing messages. It does no I/O: the WebSocket server in
//! [`ws`] and the line mirror in [`stdio`] both feed it from one command
//! queue, and [`replay_trace`] drives the session directly as a harness.

mod hub;
pub mod stdio;
pub mod ws;

pub use stdio::serve_stdio;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{KeyframedDocument, MaredDocument, SpaceAnchor, MARED_VERSION};
use crate::playback::{
    export_session, InputKind, InteractionInput, Mode, PlaybackConfig, PlaybackError, PlaybackSession, SessionEvent,
    SessionEventKind,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Playback(#[from] PlaybackError),
    #[error("trace input {index} at wall time {wall} comes before {previous}")]
    TraceOrder { index: usize, wall: f64, previous: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MessageType {
    Hello,
    State,
    Inject,
    SetSpeed,
    /// Client-driven clock advance; only accepted in lockstep mode.
    Tick,
    BranchOpened,
    BranchClosed,
    Ended,
    Error,
}

/// One protocol message, one per text frame or line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<u64>,
    #[serde(default)]
    pub body: Value,
}

impl WireMessage {
    pub fn to_line(&self) -> String {
        // canonical key order, no newline
        serde_json::to_value(self).and_then(|v| serde_json::to_string(&v)).expect("wire messages serialize")
    }
}

/// Error codes carried in `error` bodies.
pub mod codes {
    pub const BUSY: &str = "busy";
    pub const BAD_MESSAGE: &str = "badMessage";
    pub const REJECTED: &str = "rejected";
    pub const ENDED: &str = "ended";
    pub const READ_ONLY: &str = "readOnly";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub playback: PlaybackConfig,
    /// Advance time only on client `tick` messages.
    pub lockstep: bool,
    /// State broadcasts per second in real-time mode.
    pub cadence_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_space: Option<Vec<SpaceAnchor>>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { playback: PlaybackConfig::default(), lockstep: false, cadence_hz: 10.0, target_space: None }
    }
}

/// A message without its per-connection sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub kind: MessageType,
    pub reply_to: Option<u64>,
    pub body: Value,
}

impl Outgoing {
    fn new(kind: MessageType, body: Value) -> Self {
        Outgoing { kind, reply_to: None, body }
    }

    pub fn error(code: &str, message: impl Into<String>, reply_to: Option<u64>) -> Self {
        Outgoing { kind: MessageType::Error, reply_to, body: json!({ "code": code, "message": message.into() }) }
    }

    pub fn with_seq(self, seq: u64) -> WireMessage {
        WireMessage { kind: self.kind, seq, reply_to: self.reply_to, body: self.body }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct InjectBody {
    kind: InputKind,
    #[serde(default)]
    payload: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    wall_time: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SpeedBody {
    rate: f64,
    #[serde(default)]
    wall_time: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TickBody {
    wall_time: f64,
}

/// The session plus protocol bookkeeping for one controlling client.
pub struct Controller {
    session: PlaybackSession,
    config: ServiceConfig,
    log_cursor: usize,
    last_seq: Option<u64>,
}

impl Controller {
    pub fn new(kdoc: &KeyframedDocument, config: ServiceConfig) -> Result<Self, ServiceError> {
        let session = PlaybackSession::open(kdoc, config.target_space.as_deref(), config.playback.clone())?;
        Ok(Controller { session, config, log_cursor: 0, last_seq: None })
    }

    pub fn session(&self) -> &PlaybackSession {
        &self.session
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn lockstep(&self) -> bool {
        self.config.lockstep
    }

    /// `hello` for a newly connected client.
    pub fn hello(&self, role: &str) -> Outgoing {
        Outgoing::new(
            MessageType::Hello,
            json!({
                "maredVersion": MARED_VERSION,
                "sessionConfig": self.config,
                "role": role,
            }),
        )
    }

    /// Current state without advancing time.
    pub fn state(&self) -> Outgoing {
        Outgoing::new(MessageType::State, serde_json::to_value(self.session.snapshot()).expect("state serializes"))
    }

    /// Forgets the last client sequence number, for a new controller.
    pub fn reset_client(&mut self) {
        self.last_seq = None;
    }

    /// Advances real time; returns notifications and a state broadcast.
    pub fn advance(&mut self, now: f64) -> Vec<Outgoing> {
        let now = now.max(self.session.wall_time());
        match self.session.tick(now) {
            Ok(state) => {
                let mut out = self.notifications();
                out.push(Outgoing::new(MessageType::State, serde_json::to_value(state).expect("state serializes")));
                out
            }
            Err(e) => vec![Outgoing::error(codes::BAD_MESSAGE, e.to_string(), None)],
        }
    }

    /// Handles one client line. `now` is the real-time clock and is ignored
    /// in lockstep mode.
    pub fn handle(&mut self, text: &str, now: Option<f64>) -> Vec<Outgoing> {
        let msg: WireMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                let seq = serde_json::from_str::<Value>(text).ok().and_then(|v| v.get("seq")?.as_u64());
                return vec![Outgoing::error(codes::BAD_MESSAGE, e.to_string(), seq)];
            }
        };
        let seq = msg.seq;
        if self.last_seq.is_some_and(|last| seq <= last) {
            return vec![Outgoing::error(codes::BAD_MESSAGE, format!("seq {seq} is not increasing"), Some(seq))];
        }
        self.last_seq = Some(seq);
        let result = match msg.kind {
            MessageType::Inject => self.on_inject(msg.body, now),
            MessageType::SetSpeed => self.on_speed(msg.body, now),
            MessageType::Tick => self.on_tick(msg.body),
            other => Err(Outgoing::error(
                codes::BAD_MESSAGE,
                format!("clients may not send {}", serde_json::to_string(&other).unwrap_or_default()),
                None,
            )),
        };
        let mut out = self.notifications();
        match result {
            Ok(state) => out.push(state),
            Err(err) => out.push(err),
        }
        for m in out.iter_mut().filter(|m| matches!(m.kind, MessageType::State | MessageType::Error)) {
            m.reply_to = Some(seq);
        }
        out
    }

    fn wall_for(&self, requested: Option<f64>, now: Option<f64>) -> f64 {
        if self.config.lockstep {
            requested.unwrap_or(self.session.wall_time())
        } else {
            now.unwrap_or(self.session.wall_time()).max(self.session.wall_time())
        }
    }

    fn reply_state(&mut self, wall: f64) -> Result<Outgoing, Outgoing> {
        let state = self.session.tick(wall).map_err(reject)?;
        Ok(Outgoing::new(MessageType::State, serde_json::to_value(state).expect("state serializes")))
    }

    fn on_inject(&mut self, body: Value, now: Option<f64>) -> Result<Outgoing, Outgoing> {
        let body: InjectBody =
            serde_json::from_value(body).map_err(|e| Outgoing::error(codes::BAD_MESSAGE, e.to_string(), None))?;
        let wall = self.wall_for(body.wall_time, now);
        let input = InteractionInput { wall_time: wall, kind: body.kind, payload: body.payload, target: body.target };
        self.session.inject(&input).map_err(reject)?;
        self.reply_state(wall)
    }

    fn on_speed(&mut self, body: Value, now: Option<f64>) -> Result<Outgoing, Outgoing> {
        let body: SpeedBody =
            serde_json::from_value(body).map_err(|e| Outgoing::error(codes::BAD_MESSAGE, e.to_string(), None))?;
        let wall = self.wall_for(body.wall_time, now);
        self.session.set_speed(wall, body.rate).map_err(reject)?;
        self.reply_state(wall)
    }

    fn on_tick(&mut self, body: Value) -> Result<Outgoing, Outgoing> {
        if !self.config.lockstep {
            return Err(Outgoing::error(codes::BAD_MESSAGE, "tick is only accepted in lockstep mode", None));
        }
        let body: TickBody =
            serde_json::from_value(body).map_err(|e| Outgoing::error(codes::BAD_MESSAGE, e.to_string(), None))?;
        self.reply_state(body.wall_time)
    }

    /// Messages for log entries not yet reported.
    fn notifications(&mut self) -> Vec<Outgoing> {
        let mut out = Vec::new();
        let log = self.session.log();
        for e in &log[self.log_cursor..] {
            let kind = match &e.kind {
                SessionEventKind::BranchOpened { .. } => MessageType::BranchOpened,
                SessionEventKind::BranchClosed { .. } => MessageType::BranchClosed,
                SessionEventKind::Ended => MessageType::Ended,
                _ => continue,
            };
            let body = if kind == MessageType::Ended {
                json!({
                    "log": log,
                    "export": export_session(&self.session).ok(),
                })
            } else {
                serde_json::to_value(e).expect("log entries serialize")
            };
            out.push(Outgoing::new(kind, body));
        }
        self.log_cursor = log.len();
        out
    }
}

fn reject(e: PlaybackError) -> Outgoing {
    let code = match e {
        PlaybackError::SessionEnded => codes::ENDED,
        PlaybackError::InvalidInput(_) | PlaybackError::InvalidRate(_) | PlaybackError::WallRegression { .. } => {
            codes::BAD_MESSAGE
        }
        _ => codes::REJECTED,
    };
    Outgoing::error(code, e.to_string(), None)
}

/// Output of a deterministic headless run.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub log: Vec<SessionEvent>,
    pub export: MaredDocument,
}

/// Runs a session to its end, applying `trace` inputs at their wall times.
/// Inputs the session refuses (a nested question, input after the end) are
/// logged by the session where applicable and otherwise skipped.
pub fn replay_trace(
    kdoc: &KeyframedDocument,
    trace: &[InteractionInput],
    config: &ServiceConfig,
) -> Result<Replay, ServiceError> {
    for (i, pair) in trace.windows(2).enumerate() {
        if pair[1].wall_time < pair[0].wall_time {
            return Err(ServiceError::TraceOrder {
                index: i + 1,
                wall: pair[1].wall_time,
                previous: pair[0].wall_time,
            });
        }
    }
    let mut session = PlaybackSession::open(kdoc, config.target_space.as_deref(), config.playback.clone())?;
    for input in trace {
        match session.inject(input) {
            Ok(_) | Err(PlaybackError::NestedBranchRejected { .. }) | Err(PlaybackError::SessionEnded) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if session.mode() != Mode::Ended {
        session.run_to_end()?;
    }
    let export = export_session(&session)?;
    Ok(Replay { log: session.log().to_vec(), export })
}

/// Role requested by a connecting client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Controller,
    Observer,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Controller => "controller",
            Role::Observer => "observer",
        }
    }
}
