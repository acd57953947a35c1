// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! The WebSocket protocol mirrored on a pair of byte streams, one message
//! per line. The peer is the controlling client; serving stops at end of
//! input.

use std::io::{BufRead, Write};
use std::sync::atomic::AtomicBool;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use super::hub::{Command, Hub};
use super::{Controller, Role, ServiceConfig, ServiceError};
use crate::model::KeyframedDocument;

pub fn serve_stdio<R, W>(
    kdoc: &KeyframedDocument,
    config: ServiceConfig,
    input: R,
    mut output: W,
) -> Result<(), ServiceError>
where
    R: BufRead + Send + 'static,
    W: Write + Send + 'static,
{
    let controller = Controller::new(kdoc, config)?;
    let (tx, rx) = mpsc::channel();
    let (sink, lines) = mpsc::channel::<String>();
    tx.send(Command::Connect { id: 0, role: Role::Controller, sink }).expect("hub receiver alive");

    let writer = thread::spawn(move || -> std::io::Result<()> {
        for line in lines {
            writeln!(output, "{line}")?;
            output.flush()?;
        }
        Ok(())
    });
    let reader = thread::spawn(move || {
        for line in input.lines() {
            let Ok(text) = line else { break };
            if text.trim().is_empty() {
                continue;
            }
            if tx.send(Command::Message { id: 0, text }).is_err() {
                return;
            }
        }
        let _ = tx.send(Command::Disconnect { id: 0 });
    });

    Hub::new(controller).run(rx, Arc::new(AtomicBool::new(false)), true);
    let _ = reader.join();
    writer.join().expect("writer thread panicked")?;
    Ok(())
}
