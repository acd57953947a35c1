// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::model::{EntityKind, MaredDocument, SemanticExperienceSegment, Timestamp, Verb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InputKind {
    Speech,
    Gesture,
    Gaze,
    Selection,
}

/// One action by the person watching the playback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InteractionInput {
    pub wall_time: f64,
    pub kind: InputKind,
    #[serde(default)]
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum IntentKind {
    Question,
    Inspect,
    Done,
    Noop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Intent {
    pub kind: IntentKind,
    pub topic: String,
}

impl Intent {
    pub fn opens_branch(&self) -> bool {
        matches!(self.kind, IntentKind::Question | IntentKind::Inspect)
    }
}

/// Fixed rule table: questions end in `?`, gestures at an entity inspect
/// it, selecting `done` ends a branch. Anything else is a no-op.
pub fn classify_intent(input: &InteractionInput) -> Intent {
    let text = input.payload.trim();
    let (kind, topic) = match (input.kind, &input.target) {
        (InputKind::Speech, _) if text.ends_with('?') => (IntentKind::Question, text.to_owned()),
        (InputKind::Gesture, Some(t)) => (IntentKind::Inspect, t.clone()),
        (InputKind::Selection, _) if text == "done" => (IntentKind::Done, String::new()),
        _ => (IntentKind::Noop, String::new()),
    };
    Intent { kind, topic }
}

/// One timed line of a branch script. `offset` is seconds after the branch
/// opens; branch scripts run in wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptLine {
    pub offset: f64,
    pub duration: f64,
    pub actor: String,
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

pub struct ResponderContext<'a> {
    pub document: &'a MaredDocument,
    pub exp_time: Timestamp,
    pub segment: Option<&'a SemanticExperienceSegment>,
}

impl ResponderContext<'_> {
    /// The segment's first participating user, else the first user at all.
    pub fn primary_user(&self) -> Option<&str> {
        let is_user = |id: &str| self.document.entity(id).is_some_and(|e| e.kind == EntityKind::User);
        self.segment
            .and_then(|s| s.participants.iter().find(|p| is_user(p)))
            .map(String::as_str)
            .or_else(|| self.document.entities.iter().find(|e| e.kind == EntityKind::User).map(|e| e.id.as_str()))
    }
}

/// Produces the script played inside a branch.
pub trait Responder: Send {
    fn respond(&self, intent: &Intent, ctx: &ResponderContext<'_>) -> Vec<ScriptLine>;
}

/// Actor used when the document has no users to speak for it.
pub const NARRATOR: &str = "narrator";

/// Answers every intent with one spoken line, `answer(topic)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateResponder {
    pub duration: f64,
}

impl Default for TemplateResponder {
    fn default() -> Self {
        TemplateResponder { duration: 5.0 }
    }
}

impl Responder for TemplateResponder {
    fn respond(&self, intent: &Intent, ctx: &ResponderContext<'_>) -> Vec<ScriptLine> {
        vec![ScriptLine {
            offset: 0.0,
            duration: self.duration,
            actor: ctx.primary_user().unwrap_or(NARRATOR).to_owned(),
            verb: Verb::Speak,
            target: None,
            payload: Some(format!("answer({})", intent.topic)),
        }]
    }
}
