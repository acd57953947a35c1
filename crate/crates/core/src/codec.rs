// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Text encodings for documents, captures, traces and session logs.
//!
//! Documents (`.mared`, `.kmared`) are single JSON objects in canonical
//! form: keys sorted, two-space indentation, shortest round-trip numbers,
//! trailing newline. Captures, traces and logs (`.rawcap`, `.trace`,
//! reports) are JSON lines, one compact canonical object per line.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::logger::{RawCapture, RawFrame};
use crate::model::{KeyframedDocument, MaredDocument, MARED_VERSION, SUPPORTED_VERSIONS};
use crate::playback::{InteractionInput, SessionEvent};
use crate::validate::{validate_document, validate_keyframed, Violation};

const DOCUMENT_KEYS: &[&str] =
    &["maredVersion", "header", "entities", "segments", "interactionEvents", "stateChangeEvents"];
const KEYFRAME_KEYS: &[&str] = &["threshold", "keyframes"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("input is not valid UTF-8 (byte {offset})")]
    Utf8 { offset: usize },
    #[error("versionMismatch(supported {supported}, found {found})")]
    VersionMismatch { supported: String, found: String },
    #[error("missing maredVersion")]
    MissingVersion,
    #[error("top level must be an object")]
    NotAnObject,
    #[error("unknown top-level keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid document: {}", ViolationList(.0))]
    Invalid(Vec<Violation>),
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// How unknown top-level keys are treated on decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    #[default]
    Strict,
    /// Keep them in `extensions` and write them back on encode.
    Lenient,
}

/// A decoded document file of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Document(MaredDocument),
    Keyframed(KeyframedDocument),
}

fn schema<E: fmt::Display>(e: E) -> CodecError {
    CodecError::Schema(e.to_string())
}

fn parse_error(e: serde_json::Error) -> CodecError {
    CodecError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Pretty canonical text of any serializable value, with trailing newline.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<String, CodecError> {
    // going through Value sorts every object's keys
    let v = serde_json::to_value(value).map_err(schema)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(schema)?;
    s.push('\n');
    Ok(s)
}

fn to_canonical_line<T: Serialize>(value: &T) -> Result<String, CodecError> {
    let v = serde_json::to_value(value).map_err(schema)?;
    serde_json::to_string(&v).map_err(schema)
}

fn document_value(doc: &MaredDocument) -> Result<Map<String, Value>, CodecError> {
    let Value::Object(mut map) = serde_json::to_value(doc).map_err(schema)? else {
        return Err(CodecError::NotAnObject);
    };
    for (k, v) in &doc.extensions {
        map.entry(k.clone()).or_insert_with(|| v.clone());
    }
    Ok(map)
}

/// Canonical text of a valid document.
pub fn encode_document(doc: &MaredDocument) -> Result<String, CodecError> {
    let violations = validate_document(doc);
    if !violations.is_empty() {
        return Err(CodecError::Invalid(violations));
    }
    to_canonical(&Value::Object(document_value(doc)?))
}

/// Canonical text of a valid keyframed document: the document's keys plus
/// `threshold` and `keyframes`.
pub fn encode_keyframed(kdoc: &KeyframedDocument) -> Result<String, CodecError> {
    let violations = validate_keyframed(kdoc);
    if !violations.is_empty() {
        return Err(CodecError::Invalid(violations));
    }
    let mut map = document_value(&kdoc.document)?;
    map.insert("threshold".into(), serde_json::to_value(kdoc.threshold).map_err(schema)?);
    map.insert("keyframes".into(), serde_json::to_value(&kdoc.keyframes).map_err(schema)?);
    to_canonical(&Value::Object(map))
}

fn parse_object(text: &str) -> Result<Map<String, Value>, CodecError> {
    let value: Value = serde_json::from_str(text).map_err(parse_error)?;
    let Value::Object(map) = value else {
        return Err(CodecError::NotAnObject);
    };
    match map.get("maredVersion") {
        None => return Err(CodecError::MissingVersion),
        Some(Value::String(v)) if SUPPORTED_VERSIONS.contains(&v.as_str()) => {}
        Some(other) => {
            let found = match other {
                Value::String(s) => s.clone(),
                v => v.to_string(),
            };
            return Err(CodecError::VersionMismatch { supported: SUPPORTED_VERSIONS.join(", "), found });
        }
    }
    Ok(map)
}

fn split_document(
    mut map: Map<String, Value>,
    allowed_extra: &[&str],
    mode: DecodeMode,
) -> Result<(MaredDocument, Map<String, Value>), CodecError> {
    let mut extra = Map::new();
    for k in allowed_extra {
        if let Some(v) = map.remove(*k) {
            extra.insert((*k).to_owned(), v);
        }
    }
    let unknown: Vec<String> = map.keys().filter(|k| !DOCUMENT_KEYS.contains(&k.as_str())).cloned().collect();
    if mode == DecodeMode::Strict && !unknown.is_empty() {
        return Err(CodecError::UnknownKeys(unknown));
    }
    let mut extensions = std::collections::BTreeMap::new();
    for k in unknown {
        if let Some(v) = map.remove(&k) {
            extensions.insert(k, v);
        }
    }
    let mut doc: MaredDocument = serde_json::from_value(Value::Object(map)).map_err(schema)?;
    doc.extensions = extensions;
    Ok((doc, extra))
}

/// Parses and validates a `.mared` document.
pub fn decode_document(text: &str, mode: DecodeMode) -> Result<MaredDocument, CodecError> {
    let (doc, _) = split_document(parse_object(text)?, &[], mode)?;
    let violations = validate_document(&doc);
    if !violations.is_empty() {
        return Err(CodecError::Invalid(violations));
    }
    Ok(doc)
}

/// Parses and validates a `.kmared` keyframed document.
pub fn decode_keyframed(text: &str, mode: DecodeMode) -> Result<KeyframedDocument, CodecError> {
    let (document, mut extra) = split_document(parse_object(text)?, KEYFRAME_KEYS, mode)?;
    let mut take = |key: &str| extra.remove(key).ok_or_else(|| CodecError::Schema(format!("missing field `{key}`")));
    let threshold: f64 = serde_json::from_value(take("threshold")?).map_err(schema)?;
    let keyframes = serde_json::from_value(take("keyframes")?).map_err(schema)?;
    let kdoc = KeyframedDocument { document, threshold, keyframes };
    let violations = validate_keyframed(&kdoc);
    if !violations.is_empty() {
        return Err(CodecError::Invalid(violations));
    }
    Ok(kdoc)
}

/// Decodes either document kind from raw bytes; keyframed documents are
/// recognised by a top-level `keyframes` key. Never panics.
pub fn decode_bytes(bytes: &[u8], mode: DecodeMode) -> Result<Decoded, CodecError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CodecError::Utf8 { offset: e.valid_up_to() })?;
    let keyframed = matches!(
        serde_json::from_str::<Value>(text),
        Ok(Value::Object(ref m)) if m.contains_key("keyframes")
    );
    if keyframed {
        decode_keyframed(text, mode).map(Decoded::Keyframed)
    } else {
        decode_document(text, mode).map(Decoded::Document)
    }
}

fn encode_lines<T: Serialize>(items: &[T]) -> Result<String, CodecError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&to_canonical_line(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn decode_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, CodecError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| CodecError::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// One frame per line.
pub fn encode_raw_capture(raw: &RawCapture) -> Result<String, CodecError> {
    encode_lines(&raw.frames)
}

pub fn decode_raw_capture(text: &str) -> Result<RawCapture, CodecError> {
    Ok(RawCapture { frames: decode_lines::<RawFrame>(text)? })
}

/// One viewer input per line.
pub fn encode_trace(inputs: &[InteractionInput]) -> Result<String, CodecError> {
    encode_lines(inputs)
}

pub fn decode_trace(text: &str) -> Result<Vec<InteractionInput>, CodecError> {
    decode_lines(text)
}

/// One session log entry per line.
pub fn encode_log(log: &[SessionEvent]) -> Result<String, CodecError> {
    encode_lines(log)
}

pub fn decode_log(text: &str) -> Result<Vec<SessionEvent>, CodecError> {
    decode_lines(text)
}

/// Version this build writes.
pub fn current_version() -> &'static str {
    MARED_VERSION
}
