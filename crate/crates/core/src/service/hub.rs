// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! The single command queue every transport feeds.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::{codes, Controller, MessageType, Outgoing, Role};

pub(crate) enum Command {
    Connect { id: u64, role: Role, sink: Sender<String> },
    Message { id: u64, text: String },
    Disconnect { id: u64 },
}

struct Conn {
    id: u64,
    role: Role,
    sink: Sender<String>,
    seq: u64,
}

impl Conn {
    fn send(&mut self, msg: Outgoing) -> bool {
        self.seq += 1;
        self.sink.send(msg.with_seq(self.seq).to_line()).is_ok()
    }
}

pub(crate) struct Hub {
    controller: Controller,
    conns: Vec<Conn>,
    start: Instant,
}

impl Hub {
    pub(crate) fn new(controller: Controller) -> Self {
        Hub { controller, conns: Vec::new(), start: Instant::now() }
    }

    fn now(&self) -> Option<f64> {
        (!self.controller.lockstep()).then(|| self.start.elapsed().as_secs_f64())
    }

    fn has_controller(&self) -> bool {
        self.conns.iter().any(|c| c.role == Role::Controller)
    }

    /// Serves commands until `stop` is set, every sender is gone, or (with
    /// `until_idle`) the last connection leaves.
    pub(crate) fn run(mut self, rx: Receiver<Command>, stop: Arc<AtomicBool>, until_idle: bool) {
        let period = Duration::from_secs_f64(1.0 / self.controller.config().cadence_hz.max(0.1));
        let mut next_broadcast = Instant::now() + period;
        let mut seen_any = false;
        while !stop.load(Ordering::SeqCst) {
            let wait = next_broadcast.saturating_duration_since(Instant::now());
            match rx.recv_timeout(wait) {
                Ok(cmd) => {
                    seen_any |= matches!(cmd, Command::Connect { .. });
                    self.apply(cmd);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            if Instant::now() >= next_broadcast {
                if let Some(now) = self.now() {
                    let out = self.controller.advance(now);
                    self.broadcast(out, None);
                }
                next_broadcast = Instant::now() + period;
            }
            if until_idle && seen_any && self.conns.is_empty() {
                break;
            }
        }
    }

    fn apply(&mut self, cmd: Command) {
        match cmd {
            Command::Connect { id, role, sink } => {
                let mut conn = Conn { id, role, sink, seq: 0 };
                if role == Role::Controller && self.has_controller() {
                    conn.send(Outgoing::error(codes::BUSY, "another client controls this session", None));
                    return;
                }
                if role == Role::Controller {
                    self.controller.reset_client();
                }
                if let Some(now) = self.now() {
                    let out = self.controller.advance(now);
                    // bring everyone else up to date first
                    self.broadcast(out.into_iter().filter(|m| m.kind != MessageType::State).collect(), None);
                }
                conn.send(self.controller.hello(role.name()));
                conn.send(self.controller.state());
                self.conns.push(conn);
            }
            Command::Message { id, text } => {
                let Some(conn) = self.conns.iter_mut().find(|c| c.id == id) else {
                    return;
                };
                if conn.role == Role::Observer {
                    let seq = serde_json::from_str::<Value>(&text).ok().and_then(|v| v.get("seq")?.as_u64());
                    conn.send(Outgoing::error(codes::READ_ONLY, "observers cannot send commands", seq));
                    return;
                }
                let now = self.now();
                let out = self.controller.handle(&text, now);
                self.broadcast(out, Some(id));
            }
            Command::Disconnect { id } => self.conns.retain(|c| c.id != id),
        }
    }

    /// Replies and errors go to `requester` only; state and notifications
    /// go to everyone, without the correlation for observers.
    fn broadcast(&mut self, out: Vec<Outgoing>, requester: Option<u64>) {
        let mut dead = Vec::new();
        for msg in out {
            for conn in &mut self.conns {
                let mine = Some(conn.id) == requester;
                let send = match msg.kind {
                    MessageType::Error => mine || (requester.is_none() && conn.role == Role::Controller),
                    _ => true,
                };
                if !send {
                    continue;
                }
                let mut m = msg.clone();
                if !mine {
                    m.reply_to = None;
                }
                if !conn.send(m) {
                    dead.push(conn.id);
                }
            }
        }
        self.conns.retain(|c| !dead.contains(&c.id));
    }
}
