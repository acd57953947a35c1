// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Adaptive playback of a keyframed document.
//!
//! A session maps wall-clock time onto experience time through a
//! [`ClockMap`]. Inputs from the viewer may open a branch, which freezes
//! the main timeline while a responder's script plays; when the branch
//! closes, playback resumes at a keyframe chosen by the [`ResumePolicy`].
//!
//! Everything observable is appended to the session log. Log entries are
//! stamped with the exact wall time at which they happened on the clock
//! map, not the time of the tick that noticed them, so the log does not
//! depend on how often the session is ticked.

pub mod clock;
pub mod export;
pub mod intent;
pub mod spatial;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{KeyframedDocument, SpaceAnchor, Timestamp};

pub use clock::{ClockMap, ClockSegment};
pub use export::export_session;
pub use intent::{
    classify_intent, InputKind, Intent, IntentKind, InteractionInput, Responder, ResponderContext, ScriptLine,
    TemplateResponder,
};
pub use spatial::{adapt_spatial, Similarity, SpatialAdaptation, SpatialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlaybackError {
    #[error("nothing to play: document has no segments")]
    NothingToPlay,
    #[error("wall clock went backwards: {now} after {last}")]
    WallRegression { last: f64, now: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid playback config: {0}")]
    InvalidConfig(String),
    #[error("playback rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("branch `{open}` is already open")]
    NestedBranchRejected { open: String },
    #[error("input has no branch-opening intent ({0:?})")]
    IntentIgnored(IntentKind),
    #[error("no branch is open")]
    NoBranchOpen,
    #[error("branch is still active until wall time {closes_at}")]
    BranchStillActive { closes_at: f64 },
    #[error("session has ended")]
    SessionEnded,
    #[error("session is still active")]
    SessionStillActive,
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ResumePolicy {
    NextKeyframe,
    PausePoint,
    PreviousKeyframe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PlaybackConfig {
    pub base_rate: f64,
    /// Factor applied to the rate after a question branch.
    pub post_branch_slowdown: f64,
    pub resume_policy: ResumePolicy,
    /// Seconds without input after the script ends before a branch closes.
    pub branch_grace: f64,
    /// Let spatial adaptation fit a uniform scale as well.
    pub allow_scale: bool,
}

impl Default for PlaybackConfig {
    fn default() -> Self {
        PlaybackConfig {
            base_rate: 1.0,
            post_branch_slowdown: 0.8,
            resume_policy: ResumePolicy::NextKeyframe,
            branch_grace: 2.0,
            allow_scale: false,
        }
    }
}

impl PlaybackConfig {
    pub fn validate(&self) -> Result<(), PlaybackError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.base_rate) {
            return Err(PlaybackError::InvalidConfig(format!("baseRate {} must be positive", self.base_rate)));
        }
        if !positive(self.post_branch_slowdown) {
            return Err(PlaybackError::InvalidConfig(format!(
                "postBranchSlowdown {} must be positive",
                self.post_branch_slowdown
            )));
        }
        if !(self.branch_grace.is_finite() && self.branch_grace >= 0.0) {
            return Err(PlaybackError::InvalidConfig(format!(
                "branchGrace {} must be non-negative",
                self.branch_grace
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    Main,
    Branch,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BranchStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CloseReason {
    ScriptFinished,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Branch {
    pub id: String,
    pub parent_exp_time: Timestamp,
    pub opened_at: f64,
    pub intent: Intent,
    pub script: Vec<ScriptLine>,
    pub status: BranchStatus,
    pub resume_at: Option<Timestamp>,
    pub closed_at: Option<f64>,
    last_input: f64,
}

impl Branch {
    fn script_end(&self) -> f64 {
        self.script.iter().map(|l| self.opened_at + l.offset + l.duration).fold(self.opened_at, f64::max)
    }

    /// Wall time at which the branch closes if no further input arrives.
    pub fn closes_at(&self, grace: f64) -> f64 {
        self.script_end().max(self.last_input) + grace
    }

    fn line_id(&self, n: usize) -> String {
        format!("{}/line-{}", self.id, n + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum SessionEventKind {
    SessionStarted { degraded_alignment: bool },
    SegmentStarted { segment: String },
    SegmentEnded { segment: String },
    KeyframePassed { keyframe: Timestamp },
    EventStarted { event: String },
    InputReceived { input: InteractionInput, intent: Intent },
    InputIgnored { reason: String },
    BranchOpened { branch: String, intent: Intent, parent_exp_time: Timestamp, script: Vec<ScriptLine> },
    NestedBranchRejected { branch: String },
    BranchClosed { branch: String, reason: CloseReason, parent_exp_time: Timestamp, resume_at: Timestamp, rate: f64 },
    RateChanged { rate: f64 },
    Ended,
}

/// One log entry. `exp_time` is the main-timeline position at `wall_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionEvent {
    pub wall_time: f64,
    pub exp_time: Timestamp,
    #[serde(flatten)]
    pub kind: SessionEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpenBranchView {
    pub id: String,
    pub intent: Intent,
    pub parent_exp_time: Timestamp,
    pub opened_at: f64,
    pub closes_at: f64,
}

/// What a tick observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlaybackState {
    pub wall_time: f64,
    pub exp_time: Timestamp,
    pub mode: Mode,
    pub rate: f64,
    /// Main events active at some point since the previous tick, plus
    /// branch script lines active now.
    pub active_events: Vec<String>,
    pub keyframes_passed: Vec<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<OpenBranchView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResumeInfo {
    pub branch: String,
    pub resume_at: Timestamp,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InjectOutcome {
    Ignored,
    BranchOpened(String),
    Resumed(ResumeInfo),
}

#[derive(Debug, Clone)]
struct Milestone {
    exp: f64,
    kind: SessionEventKind,
}

fn milestones(kdoc: &KeyframedDocument) -> Vec<Milestone> {
    let doc = &kdoc.document;
    // at equal times: segment ends, segment starts, keyframes, event starts
    let mut out: Vec<(f64, u8, usize, SessionEventKind)> = Vec::new();
    for (i, s) in doc.segments.iter().enumerate() {
        out.push((s.t_end.0, 0, i, SessionEventKind::SegmentEnded { segment: s.id.clone() }));
        out.push((s.t_start.0, 1, i, SessionEventKind::SegmentStarted { segment: s.id.clone() }));
    }
    for (i, k) in kdoc.keyframes.iter().enumerate() {
        out.push((k.t.0, 2, i, SessionEventKind::KeyframePassed { keyframe: k.t }));
    }
    let starts = doc
        .interaction_events
        .iter()
        .map(|e| (e.t_start, &e.id))
        .chain(doc.state_change_events.iter().map(|s| (s.t_start, &s.id)));
    for (i, (t, id)) in starts.enumerate() {
        out.push((t.0, 3, i, SessionEventKind::EventStarted { event: id.clone() }));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    out.into_iter().map(|(exp, _, _, kind)| Milestone { exp, kind }).collect()
}

/// One viewer's adaptive playback of a keyframed document.
pub struct PlaybackSession {
    kdoc: KeyframedDocument,
    config: PlaybackConfig,
    responder: Box<dyn Responder>,
    clock: ClockMap,
    mode: Mode,
    branches: Vec<Branch>,
    log: Vec<SessionEvent>,
    wall: f64,
    exp: f64,
    rate: f64,
    start: f64,
    end: f64,
    milestones: Vec<Milestone>,
    cursor: usize,
    spans: Vec<(f64, f64, String)>,
    pending_active: BTreeSet<usize>,
    pending_keyframes: Vec<Timestamp>,
    alignment: Option<SpatialAdaptation>,
}

impl std::fmt::Debug for PlaybackSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlaybackSession")
            .field("mode", &self.mode)
            .field("wall", &self.wall)
            .field("exp", &self.exp)
            .field("rate", &self.rate)
            .finish_non_exhaustive()
    }
}

impl PlaybackSession {
    /// Opens a session at the first segment's start, re-anchoring the
    /// document into `target_space` first when one is given.
    pub fn open(
        kdoc: &KeyframedDocument,
        target_space: Option<&[SpaceAnchor]>,
        config: PlaybackConfig,
    ) -> Result<Self, PlaybackError> {
        config.validate()?;
        let segments = &kdoc.document.segments;
        if segments.is_empty() {
            return Err(PlaybackError::NothingToPlay);
        }
        let alignment = match target_space {
            Some(target) => Some(adapt_spatial(kdoc, target, config.allow_scale)?),
            None => None,
        };
        let kdoc = alignment.as_ref().map_or_else(|| kdoc.clone(), |a| a.document.clone());
        let start = segments.iter().map(|s| s.t_start.0).fold(f64::INFINITY, f64::min);
        let end = segments.iter().map(|s| s.t_end.0).fold(f64::NEG_INFINITY, f64::max);
        let doc = &kdoc.document;
        let spans = doc
            .interaction_events
            .iter()
            .map(|e| (e.t_start.0, e.t_end.0, e.id.clone()))
            .chain(doc.state_change_events.iter().map(|s| (s.t_start.0, s.t_end.0, s.id.clone())))
            .collect();
        let mut session = PlaybackSession {
            milestones: milestones(&kdoc),
            clock: ClockMap::new(Timestamp(start), config.base_rate),
            rate: config.base_rate,
            kdoc,
            config,
            responder: Box::new(TemplateResponder::default()),
            mode: Mode::Main,
            branches: Vec::new(),
            log: Vec::new(),
            wall: 0.0,
            exp: start,
            start,
            end,
            cursor: 0,
            spans,
            pending_active: BTreeSet::new(),
            pending_keyframes: Vec::new(),
            alignment,
        };
        let degraded = session.alignment.as_ref().is_some_and(|a| a.degraded);
        session.record(0.0, start, SessionEventKind::SessionStarted { degraded_alignment: degraded });
        session.play_to(0.0);
        Ok(session)
    }

    pub fn with_responder(mut self, responder: Box<dyn Responder>) -> Self {
        self.responder = responder;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn wall_time(&self) -> f64 {
        self.wall
    }

    pub fn exp_time(&self) -> Timestamp {
        Timestamp(self.exp)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn log(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn clock(&self) -> &ClockMap {
        &self.clock
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn document(&self) -> &KeyframedDocument {
        &self.kdoc
    }

    pub fn config(&self) -> &PlaybackConfig {
        &self.config
    }

    pub fn alignment(&self) -> Option<&SpatialAdaptation> {
        self.alignment.as_ref()
    }

    /// Wall time at which the main timeline reached its end.
    pub fn ended_at(&self) -> Option<f64> {
        (self.mode == Mode::Ended).then(|| self.clock.current().wall_start)
    }

    /// Experience time at which the session starts and ends.
    pub fn bounds(&self) -> (Timestamp, Timestamp) {
        (Timestamp(self.start), Timestamp(self.end))
    }

    fn open_branch(&self) -> Option<&Branch> {
        self.branches.last().filter(|b| b.status == BranchStatus::Open)
    }

    fn open_branch_mut(&mut self) -> Option<&mut Branch> {
        self.branches.last_mut().filter(|b| b.status == BranchStatus::Open)
    }

    /// Next wall time at which the session changes on its own: the branch
    /// closing or the end of the timeline.
    pub fn next_deadline(&self) -> Option<f64> {
        match self.mode {
            Mode::Branch => self.open_branch().map(|b| b.closes_at(self.config.branch_grace)),
            Mode::Main => self.clock.wall_reaching(self.end).map(|w| w.max(self.wall)),
            Mode::Ended => None,
        }
    }

    fn record(&mut self, wall: f64, exp: f64, kind: SessionEventKind) {
        let wall = self.log.last().map_or(wall, |l| wall.max(l.wall_time));
        self.log.push(SessionEvent { wall_time: wall, exp_time: Timestamp(exp), kind });
    }

    fn check_wall(&self, wall: f64) -> Result<(), PlaybackError> {
        if !wall.is_finite() {
            return Err(PlaybackError::InvalidInput(format!("wall time {wall} is not finite")));
        }
        if wall < self.wall {
            return Err(PlaybackError::WallRegression { last: self.wall, now: wall });
        }
        Ok(())
    }

    /// Advances to `wall`, returning what happened since the previous tick.
    pub fn tick(&mut self, wall: f64) -> Result<PlaybackState, PlaybackError> {
        self.advance(wall)?;
        Ok(self.take_state())
    }

    fn advance(&mut self, wall: f64) -> Result<(), PlaybackError> {
        self.check_wall(wall)?;
        loop {
            match self.mode {
                Mode::Branch => {
                    let closes = self.open_branch().map(|b| b.closes_at(self.config.branch_grace));
                    match closes {
                        Some(c) if c <= wall => {
                            self.wall = c;
                            self.close_branch(CloseReason::ScriptFinished);
                        }
                        _ => break,
                    }
                }
                Mode::Main => {
                    self.play_to(wall);
                    break;
                }
                Mode::Ended => break,
            }
        }
        self.wall = wall;
        Ok(())
    }

    /// Runs the main timeline forward to `wall`, ending the session if it
    /// reaches the last segment's end.
    fn play_to(&mut self, wall: f64) {
        let target = self.clock.exp_at(wall).0;
        // compare on the wall axis too so rounding cannot leave the end unreached
        let reached = self.clock.wall_reaching(self.end).is_some_and(|w| w <= wall);
        if target < self.end && !reached {
            self.emit_milestones(target);
            self.mark_active(self.exp, target);
            self.exp = target;
            return;
        }
        let wall_end = self.clock.wall_reaching(self.end).unwrap_or(wall).clamp(self.wall, wall);
        self.emit_milestones(self.end);
        self.mark_active(self.exp, self.end);
        self.exp = self.end;
        self.clock.restart(wall_end, Timestamp(self.end), 0.0);
        self.mode = Mode::Ended;
        self.wall = wall_end;
        self.record(wall_end, self.end, SessionEventKind::Ended);
    }

    fn emit_milestones(&mut self, limit: f64) {
        while let Some(m) = self.milestones.get(self.cursor) {
            if m.exp > limit {
                break;
            }
            let seg = *self.clock.current();
            let at = self.clock.wall_reaching(m.exp).unwrap_or(seg.wall_start).max(seg.wall_start);
            // milestones a forward resume jumped over are logged where playback is
            let (exp, kind) = (m.exp.max(self.exp), m.kind.clone());
            if let SessionEventKind::KeyframePassed { keyframe } = kind {
                self.pending_keyframes.push(keyframe);
            }
            self.record(at, exp, kind);
            self.cursor += 1;
        }
    }

    fn mark_active(&mut self, lo: f64, hi: f64) {
        for (i, (s, e, _)) in self.spans.iter().enumerate() {
            if *s <= hi && *e >= lo {
                self.pending_active.insert(i);
            }
        }
    }

    fn take_state(&mut self) -> PlaybackState {
        let mut active: Vec<String> =
            std::mem::take(&mut self.pending_active).into_iter().map(|i| self.spans[i].2.clone()).collect();
        let grace = self.config.branch_grace;
        let branch = self.open_branch().map(|b| {
            for (n, l) in b.script.iter().enumerate() {
                let from = b.opened_at + l.offset;
                if from <= self.wall && self.wall <= from + l.duration {
                    active.push(b.line_id(n));
                }
            }
            OpenBranchView {
                id: b.id.clone(),
                intent: b.intent.clone(),
                parent_exp_time: b.parent_exp_time,
                opened_at: b.opened_at,
                closes_at: b.closes_at(grace),
            }
        });
        PlaybackState {
            wall_time: self.wall,
            exp_time: Timestamp(self.exp),
            mode: self.mode,
            rate: if self.mode == Mode::Main { self.rate } else { 0.0 },
            active_events: active,
            keyframes_passed: std::mem::take(&mut self.pending_keyframes),
            branch,
        }
    }

    /// State as of the last tick, without consuming pending observations.
    pub fn snapshot(&self) -> PlaybackState {
        let mut copy = PlaybackState {
            wall_time: self.wall,
            exp_time: Timestamp(self.exp),
            mode: self.mode,
            rate: if self.mode == Mode::Main { self.rate } else { 0.0 },
            active_events: self.pending_active.iter().map(|&i| self.spans[i].2.clone()).collect(),
            keyframes_passed: self.pending_keyframes.clone(),
            branch: None,
        };
        if let Some(b) = self.open_branch() {
            for (n, l) in b.script.iter().enumerate() {
                let from = b.opened_at + l.offset;
                if from <= self.wall && self.wall <= from + l.duration {
                    copy.active_events.push(b.line_id(n));
                }
            }
            copy.branch = Some(OpenBranchView {
                id: b.id.clone(),
                intent: b.intent.clone(),
                parent_exp_time: b.parent_exp_time,
                opened_at: b.opened_at,
                closes_at: b.closes_at(self.config.branch_grace),
            });
        }
        copy
    }

    /// Applies one viewer input at its wall time.
    ///
    /// A question or inspection while a branch is open is rejected with
    /// [`PlaybackError::NestedBranchRejected`]; the rejection is logged and
    /// still counts as activity that keeps the branch open.
    pub fn inject(&mut self, input: &InteractionInput) -> Result<InjectOutcome, PlaybackError> {
        self.advance(input.wall_time)?;
        if self.mode == Mode::Ended {
            return Err(PlaybackError::SessionEnded);
        }
        let intent = classify_intent(input);
        self.record(
            self.wall,
            self.exp,
            SessionEventKind::InputReceived { input: input.clone(), intent: intent.clone() },
        );
        if let Some(b) = self.open_branch_mut() {
            b.last_input = input.wall_time;
            let open = b.id.clone();
            return match intent.kind {
                IntentKind::Question | IntentKind::Inspect => {
                    self.record(self.wall, self.exp, SessionEventKind::NestedBranchRejected { branch: open.clone() });
                    Err(PlaybackError::NestedBranchRejected { open })
                }
                IntentKind::Done => Ok(InjectOutcome::Resumed(self.close_branch(CloseReason::Done))),
                IntentKind::Noop => {
                    self.ignore("no recognised intent");
                    Ok(InjectOutcome::Ignored)
                }
            };
        }
        match intent.kind {
            IntentKind::Question | IntentKind::Inspect => Ok(InjectOutcome::BranchOpened(self.branch_out(intent))),
            IntentKind::Done => {
                self.ignore("no branch open");
                Ok(InjectOutcome::Ignored)
            }
            IntentKind::Noop => {
                self.ignore("no recognised intent");
                Ok(InjectOutcome::Ignored)
            }
        }
    }

    /// Like [`inject`](Self::inject) but only for inputs that open a branch.
    pub fn create_new_branch(&mut self, input: &InteractionInput) -> Result<&Branch, PlaybackError> {
        let intent = classify_intent(input);
        if !intent.opens_branch() && self.mode == Mode::Main {
            self.inject(input)?;
            return Err(PlaybackError::IntentIgnored(intent.kind));
        }
        match self.inject(input)? {
            InjectOutcome::BranchOpened(_) => Ok(self.branches.last().expect("branch just opened")),
            _ => Err(PlaybackError::IntentIgnored(intent.kind)),
        }
    }

    fn ignore(&mut self, reason: &str) {
        self.record(self.wall, self.exp, SessionEventKind::InputIgnored { reason: reason.into() });
    }

    fn branch_out(&mut self, intent: Intent) -> String {
        self.clock.set_rate(self.wall, 0.0);
        let exp = Timestamp(self.exp);
        let ctx = ResponderContext {
            document: &self.kdoc.document,
            exp_time: exp,
            segment: self.kdoc.document.segment_at(exp),
        };
        let mut script = self.responder.respond(&intent, &ctx);
        for l in &mut script {
            l.offset = if l.offset.is_finite() { l.offset.max(0.0) } else { 0.0 };
            l.duration = if l.duration.is_finite() { l.duration.max(0.0) } else { 0.0 };
        }
        let id = format!("branch-{}", self.branches.len() + 1);
        self.branches.push(Branch {
            id: id.clone(),
            parent_exp_time: exp,
            opened_at: self.wall,
            intent: intent.clone(),
            script: script.clone(),
            status: BranchStatus::Open,
            resume_at: None,
            closed_at: None,
            last_input: self.wall,
        });
        self.mode = Mode::Branch;
        self.record(
            self.wall,
            self.exp,
            SessionEventKind::BranchOpened { branch: id.clone(), intent, parent_exp_time: exp, script },
        );
        id
    }

    /// Closes the open branch once its script is over and the grace period
    /// has passed without input.
    pub fn return_to_main(&mut self) -> Result<ResumeInfo, PlaybackError> {
        let Some(b) = self.open_branch() else {
            return Err(PlaybackError::NoBranchOpen);
        };
        let closes_at = b.closes_at(self.config.branch_grace);
        if closes_at > self.wall {
            return Err(PlaybackError::BranchStillActive { closes_at });
        }
        Ok(self.close_branch(CloseReason::ScriptFinished))
    }

    /// Where the main timeline picks up after a branch paused it at `pause`.
    pub fn resume_point(&self, pause: f64) -> f64 {
        let keyframes = self.kdoc.keyframes.iter().map(|k| k.t.0);
        let resume = match self.config.resume_policy {
            ResumePolicy::PausePoint => pause,
            ResumePolicy::PreviousKeyframe => {
                keyframes.filter(|&t| t <= pause).fold(pause, |acc, t| if acc == pause { t } else { acc.max(t) })
            }
            ResumePolicy::NextKeyframe => {
                match keyframes
                    .filter(|&t| t >= pause)
                    .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
                {
                    None => pause,
                    // never jump over the start of an event that has not played yet
                    Some(k) => self.spans.iter().map(|s| s.0).filter(|&s| s > pause).fold(k, f64::min),
                }
            }
        };
        resume.clamp(self.start, self.end)
    }

    fn close_branch(&mut self, reason: CloseReason) -> ResumeInfo {
        let grace_rate = self.config.post_branch_slowdown;
        let wall = self.wall;
        let b = self.open_branch().expect("close_branch needs an open branch");
        let parent = b.parent_exp_time.0;
        let slowed = b.intent.kind == IntentKind::Question;
        let id = b.id.clone();
        let resume = self.resume_point(parent);
        if slowed {
            self.rate *= grace_rate;
        }
        let rate = self.rate;
        {
            let b = self.open_branch_mut().expect("open branch");
            b.status = BranchStatus::Closed;
            b.resume_at = Some(Timestamp(resume));
            b.closed_at = Some(wall);
        }
        self.clock.restart(wall, Timestamp(resume), rate);
        self.mode = Mode::Main;
        self.record(
            wall,
            resume,
            SessionEventKind::BranchClosed {
                branch: id.clone(),
                reason,
                parent_exp_time: Timestamp(parent),
                resume_at: Timestamp(resume),
                rate,
            },
        );
        if resume < parent {
            self.cursor = self.milestones.partition_point(|m| m.exp < resume);
        }
        self.exp = resume;
        self.play_to(wall);
        ResumeInfo { branch: id, resume_at: Timestamp(resume), rate }
    }

    /// Changes the main playback rate from `wall` on. During a branch the
    /// new rate takes effect when the main timeline resumes.
    pub fn set_speed(&mut self, wall: f64, rate: f64) -> Result<(), PlaybackError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(PlaybackError::InvalidRate(rate));
        }
        self.advance(wall)?;
        if self.mode == Mode::Ended {
            return Err(PlaybackError::SessionEnded);
        }
        self.rate = rate;
        if self.mode == Mode::Main {
            self.clock.set_rate(self.wall, rate);
        }
        self.record(self.wall, self.exp, SessionEventKind::RateChanged { rate });
        Ok(())
    }

    /// Ticks through every remaining deadline until the session ends.
    pub fn run_to_end(&mut self) -> Result<(), PlaybackError> {
        while let Some(d) = self.next_deadline() {
            self.advance(d.max(self.wall))?;
        }
        Ok(())
    }
}
