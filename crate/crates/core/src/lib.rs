// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Capture to semantic document, document to keyframes, keyframes to an
//! adaptive branching replay.

pub mod codec;
pub mod distill;
pub mod fixtures;
pub mod logger;
pub mod model;
pub mod playback;
pub mod relation;
pub mod service;
pub mod validate;

pub use codec::{CodecError, DecodeMode};
pub use distill::{distill, ScoringWeights, Threshold};
pub use logger::{ingest, LoggerConfig, RawCapture, RawFrame};
pub use model::{
    Entity, EntityKind, InteractionEvent, Keyframe, KeyframedDocument, MaredDocument, Pose, SemanticExperienceSegment,
    SemanticRelation, SpaceAnchor, StateChange, StateChangeEvent, Timestamp,
};
pub use playback::{
    export_session, InteractionInput, PlaybackConfig, PlaybackError, PlaybackSession, PlaybackState, SessionEvent,
    SessionEventKind,
};
pub use service::{replay_trace, ServiceConfig, WireMessage};
pub use validate::{validate_document, validate_keyframed, Violation};
