// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Shared inputs for the criterion benches.

use mared_core::fixtures::{random_capture, RandomCaptureSpec};
use mared_core::playback::{InputKind, InteractionInput};
use mared_core::{
    distill, ingest, KeyframedDocument, LoggerConfig, MaredDocument, RawCapture, ScoringWeights, Threshold,
};

/// A capture of `frames` frames with three users and four objects.
pub fn capture(frames: usize) -> RawCapture {
    random_capture(7, RandomCaptureSpec { frames, users: 3, objects: 4, markers: true })
}

pub fn document(frames: usize) -> MaredDocument {
    ingest(&capture(frames), &LoggerConfig::default()).expect("bench capture ingests")
}

pub fn keyframed(frames: usize, theta: f64) -> KeyframedDocument {
    distill(&document(frames), Threshold::new(theta).expect("θ in range"), &ScoringWeights::default())
        .expect("default weights are valid")
}

/// A question every `every` seconds of wall time, up to `until`.
pub fn question_trace(every: f64, until: f64) -> Vec<InteractionInput> {
    let mut out = Vec::new();
    let mut t = every;
    while t < until {
        out.push(InteractionInput { wall_time: t, kind: InputKind::Speech, payload: "why?".into(), target: None });
        t += every;
    }
    out
}
