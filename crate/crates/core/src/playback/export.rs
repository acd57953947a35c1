// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Re-encoding a finished session as a document of what the viewer saw.
//!
//! The exported document runs on the session's wall axis, offset by the
//! first segment's start. Main-timeline segments are split wherever
//! playback was interrupted or changed speed, and events running across
//! such a split are split with them. Every branch becomes a segment of
//! its own holding its script lines.

use std::collections::HashMap;

use crate::model::{
    Entity, EntityKind, InteractionEvent, MaredDocument, Pose, SemanticExperienceSegment, StateChange, StateSnapshot,
    Timestamp, TrajectorySample,
};

use super::intent::NARRATOR;
use super::{BranchStatus, PlaybackError, PlaybackSession};

struct Interval {
    wall_from: f64,
    wall_to: f64,
    exp_from: f64,
    exp_to: f64,
    rate: f64,
    // previous interval ends exactly where this one starts
    contiguous: bool,
    last: bool,
}

impl Interval {
    fn wall(&self, exp: f64) -> f64 {
        if exp >= self.exp_to {
            return self.wall_to;
        }
        self.wall_from + (exp - self.exp_from) / self.rate
    }

    fn holds_start(&self, t: f64) -> bool {
        let lower = if self.contiguous { t > self.exp_from } else { t >= self.exp_from };
        lower && (t < self.exp_to || (t == self.exp_to && self.last))
    }

    fn continues(&self, t_start: f64, t_end: f64) -> bool {
        t_start < self.exp_from && self.exp_from < t_end && self.exp_from < self.exp_to
    }
}

fn suffixed(counts: &mut HashMap<String, usize>, id: &str) -> String {
    let n = counts.entry(id.to_owned()).or_insert(0);
    *n += 1;
    if *n == 1 {
        id.to_owned()
    } else {
        format!("{id}.{n}")
    }
}

/// Builds the document of an ended session.
pub fn export_session(session: &PlaybackSession) -> Result<MaredDocument, PlaybackError> {
    let Some(ended_at) = session.ended_at() else {
        return Err(PlaybackError::SessionStillActive);
    };
    let source = &session.document().document;
    let (start, _) = session.bounds();
    let t0 = start.0;
    let played = session.clock().played(ended_at);

    let mut intervals: Vec<Interval> = Vec::new();
    for (i, (from, to, seg)) in played.iter().enumerate() {
        let exp_to = seg.exp_start.0 + seg.rate * (to - from);
        let contiguous = intervals.last().is_some_and(|p: &Interval| p.exp_to == seg.exp_start.0);
        intervals.push(Interval {
            wall_from: *from,
            wall_to: *to,
            exp_from: seg.exp_start.0,
            exp_to,
            rate: seg.rate,
            contiguous,
            last: i + 1 == played.len(),
        });
    }

    let mut out = MaredDocument {
        mared_version: source.mared_version.clone(),
        header: source.header.clone(),
        entities: source.entities.clone(),
        ..MaredDocument::default()
    };
    let mut counts: HashMap<String, usize> = HashMap::new();

    for iv in &intervals {
        let at = |exp: f64| Timestamp(t0 + iv.wall(exp));
        let mut pieces: Vec<(f64, f64, String)> = Vec::new();
        for s in &source.segments {
            let a = s.t_start.0.max(iv.exp_from);
            let b = s.t_end.0.min(iv.exp_to);
            if a >= b {
                continue;
            }
            let id = suffixed(&mut counts, &s.id);
            out.segments.push(SemanticExperienceSegment { id: id.clone(), t_start: at(a), t_end: at(b), ..s.clone() });
            pieces.push((a, b, id));
        }
        let piece_of = |t: f64| pieces.iter().rev().find(|p| p.0 <= t && t <= p.1).map(|p| p.2.clone());

        let mut renamed: HashMap<&str, String> = HashMap::new();
        for e in &source.interaction_events {
            // events still running when this interval begins continue as a new piece
            let from = if iv.holds_start(e.t_start.0) {
                e.t_start.0
            } else if iv.continues(e.t_start.0, e.t_end.0) {
                iv.exp_from
            } else {
                continue;
            };
            let Some(segment_id) = piece_of(from) else {
                log::warn!("export: no segment piece for {}", e.id);
                continue;
            };
            let id = suffixed(&mut counts, &e.id);
            renamed.insert(&e.id, id.clone());
            out.interaction_events.push(InteractionEvent {
                id,
                segment_id,
                t_start: at(from),
                t_end: at(e.t_end.0.min(iv.exp_to)),
                ..e.clone()
            });
        }
        for s in &source.state_change_events {
            let is_pose = matches!(s.change, StateChange::Pose { .. });
            let from = if iv.holds_start(s.t_start.0) {
                s.t_start.0
            } else if is_pose && iv.continues(s.t_start.0, s.t_end.0) {
                iv.exp_from
            } else {
                continue;
            };
            let end = s.t_end.0.min(iv.exp_to);
            let mut change = s.change.clone();
            if let StateChange::Pose { before, after } = &mut change {
                let (b0, a0) = (*before, *after);
                if from > s.t_start.0 {
                    *before = crate::model::interpolate_track(s, &b0, &a0, Timestamp(from));
                }
                if end < s.t_end.0 {
                    *after = crate::model::interpolate_track(s, &b0, &a0, Timestamp(end));
                }
                if before == after {
                    continue;
                }
            }
            let trajectory = s.trajectory.as_ref().map(|track| {
                track
                    .iter()
                    .filter(|p| p.t.0 >= from && p.t.0 <= end)
                    .map(|p| TrajectorySample { t: at(p.t.0), pose: p.pose })
                    .collect::<Vec<_>>()
            });
            let mut sc = s.clone();
            sc.id = suffixed(&mut counts, &s.id);
            sc.t_start = at(from);
            sc.t_end = at(end);
            sc.change = change;
            sc.trajectory = trajectory;
            sc.cause_event_id = s.cause_event_id.as_ref().and_then(|c| renamed.get(c.as_str()).cloned());
            out.state_change_events.push(sc);
        }
    }

    for b in session.branches() {
        let (Some(closed), BranchStatus::Closed) = (b.closed_at, b.status) else {
            continue;
        };
        if closed <= b.opened_at {
            continue;
        }
        let mut participants: Vec<String> = Vec::new();
        let mut key_objects: Vec<String> = Vec::new();
        for (n, line) in b.script.iter().enumerate() {
            let from = b.opened_at + line.offset;
            if from > closed {
                continue;
            }
            let actor = match out.entity(&line.actor) {
                Some(e) if e.kind == EntityKind::User => line.actor.clone(),
                _ => {
                    if out.entity(NARRATOR).is_none() {
                        out.entities.push(narrator());
                    }
                    NARRATOR.to_owned()
                }
            };
            let target = line.target.clone().filter(|t| out.entity(t).is_some());
            if !participants.contains(&actor) {
                participants.push(actor.clone());
            }
            if let Some(t) = &target {
                if !key_objects.contains(t) {
                    key_objects.push(t.clone());
                }
            }
            out.interaction_events.push(InteractionEvent {
                id: format!("{}-ie-{}", b.id, n + 1),
                segment_id: b.id.clone(),
                actor,
                verb: line.verb,
                target,
                t_start: Timestamp(t0 + from),
                t_end: Timestamp(t0 + (from + line.duration).min(closed)),
                pre_state: StateSnapshot::default(),
                post_state: StateSnapshot::default(),
                payload: line.payload.clone(),
            });
        }
        out.segments.push(SemanticExperienceSegment {
            id: b.id.clone(),
            label: if b.intent.topic.is_empty() { b.id.clone() } else { b.intent.topic.clone() },
            t_start: Timestamp(t0 + b.opened_at),
            t_end: Timestamp(t0 + closed),
            participants,
            key_objects,
        });
    }

    out.segments.sort_by(|a, b| a.t_start.0.total_cmp(&b.t_start.0));
    out.interaction_events.sort_by(|a, b| a.t_start.0.total_cmp(&b.t_start.0));
    out.state_change_events.sort_by(|a, b| a.t_start.0.total_cmp(&b.t_start.0));
    Ok(out)
}

fn narrator() -> Entity {
    Entity {
        id: NARRATOR.to_owned(),
        kind: EntityKind::User,
        label: NARRATOR.to_owned(),
        significance: 0.0,
        bbox: [0.1, 0.1, 0.1],
        pose: Pose::at([0.0, 0.0, 0.0]),
        properties: Default::default(),
    }
}
