// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! WebSocket transport at `/session`. Add `?role=observer` to connect
//! read-only.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::{http, Message, WebSocket};

use super::hub::{Command, Hub};
use super::{Controller, Role, ServiceConfig, ServiceError};
use crate::model::KeyframedDocument;

pub const PATH: &str = "/session";

const POLL: Duration = Duration::from_millis(5);

/// A running server. Dropping the handle does not stop it; call
/// [`shutdown`](Self::shutdown).
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: JoinHandle<()>,
    hub: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}{}", self.addr, PATH)
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.acceptor.join();
        let _ = self.hub.join();
    }

    /// Blocks until the server stops.
    pub fn wait(self) {
        let _ = self.acceptor.join();
        let _ = self.hub.join();
    }
}

/// Binds `addr` and serves the session on background threads.
pub fn spawn(
    kdoc: &KeyframedDocument,
    config: ServiceConfig,
    addr: impl ToSocketAddrs,
) -> Result<ServerHandle, ServiceError> {
    let controller = Controller::new(kdoc, config)?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let hub_stop = stop.clone();
    let hub = thread::spawn(move || Hub::new(controller).run(rx, hub_stop, false));

    let accept_stop = stop.clone();
    let acceptor = thread::spawn(move || {
        let ids = AtomicU64::new(1);
        while !accept_stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let id = ids.fetch_add(1, Ordering::SeqCst);
                    let (tx, stop) = (tx.clone(), accept_stop.clone());
                    thread::spawn(move || {
                        if let Err(e) = connection(stream, id, tx, stop) {
                            log::debug!("connection {peer}: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    });
    log::info!("serving on ws://{addr}{PATH}");
    Ok(ServerHandle { addr, stop, acceptor, hub })
}

#[allow(clippy::result_large_err)] // the error type is fixed by tungstenite
fn handshake(stream: TcpStream) -> Result<(WebSocket<TcpStream>, Role), String> {
    let mut role = Role::Controller;
    let callback = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        if req.uri().path() != PATH {
            let body = Some(format!("no endpoint at {}", req.uri().path()));
            return Err(http::Response::builder().status(404).body(body).expect("static response"));
        }
        let observer = req.uri().query().is_some_and(|q| q.split('&').any(|kv| kv == "role=observer"));
        if observer {
            role = Role::Observer;
        }
        Ok(resp)
    };
    let ws = tungstenite::accept_hdr(stream, callback).map_err(|e| e.to_string())?;
    Ok((ws, role))
}

fn connection(stream: TcpStream, id: u64, hub: Sender<Command>, stop: Arc<AtomicBool>) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    let (mut ws, role) = handshake(stream)?;
    ws.get_ref().set_read_timeout(Some(POLL)).map_err(|e| e.to_string())?;
    let (sink, outgoing) = mpsc::channel();
    hub.send(Command::Connect { id, role, sink }).map_err(|e| e.to_string())?;
    let result = (|| {
        while !stop.load(Ordering::SeqCst) {
            loop {
                match outgoing.try_recv() {
                    Ok(line) => ws.send(Message::Text(line)).map_err(|e| e.to_string())?,
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        // refused or shut down: say goodbye after the last message
                        let _ = ws.close(None);
                        let _ = ws.flush();
                        return Ok(());
                    }
                }
            }
            match ws.read() {
                Ok(Message::Text(text)) => {
                    if hub.send(Command::Message { id, text }).is_err() {
                        return Ok(());
                    }
                }
                Ok(Message::Close(_)) => return Ok(()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
                Err(e) => return Err(e.to_string()),
            }
        }
        Ok(())
    })();
    let _ = hub.send(Command::Disconnect { id });
    result
}
