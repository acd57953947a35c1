// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Significance scoring and keyframe selection.
//!
//! Interaction events are scored on four weighted criteria (action
//! semantics, object significance, narrative progression, social context)
//! and state changes on three (physical magnitude, relation change,
//! intrinsic change). The significance of a time `t` is the best score among
//! the events whose span contains `t`. Because that value only changes at
//! event boundaries, candidate keyframe times are the boundaries themselves.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    EntityKind, EntityPose, InteractionEvent, Keyframe, KeyframedDocument, MaredDocument, StateChange,
    StateChangeEvent, Timestamp, Verb,
};

/// Candidates closer than this (seconds) collapse into one keyframe.
pub const MERGE_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("scoring error: dangling reference `{0}`")]
    Dangling(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("threshold {0} outside [0, 1]")]
pub struct ThresholdOutOfRange(pub f64);

/// The keyframe decision threshold, a constant in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self, ThresholdOutOfRange> {
        if (0.0..=1.0).contains(&value) {
            Ok(Threshold(value))
        } else {
            Err(ThresholdOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `0` keeps every candidate, `1` keeps none, anything between keeps
    /// candidates whose significance reaches the threshold.
    pub fn admits(self, significance: f64) -> bool {
        self.0 == 0.0 || (self.0 < 1.0 && significance >= self.0)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = ThresholdOutOfRange;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Threshold::new(value)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InteractionWeights {
    pub action: f64,
    pub object: f64,
    pub narrative: f64,
    pub social: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StateChangeWeights {
    pub magnitude: f64,
    pub relation: f64,
    pub intrinsic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ScoringWeights {
    pub interaction: InteractionWeights,
    pub state_change: StateChangeWeights,
    pub verb_table: BTreeMap<Verb, f64>,
    /// Displacement (m) that saturates the magnitude term.
    pub full_displacement: f64,
    /// Speed (m/s) that saturates the magnitude term.
    pub full_speed: f64,
    /// Distance (m) within which another user counts as present.
    pub social_radius: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        let verb_table = [
            (Verb::Give, 1.0),
            (Verb::Press, 0.9),
            (Verb::Activate, 0.9),
            (Verb::Grasp, 0.8),
            (Verb::Place, 0.7),
            (Verb::Release, 0.6),
            (Verb::Speak, 0.6),
            (Verb::Gaze, 0.3),
            (Verb::Gesture, 0.3),
        ]
        .into_iter()
        .collect();
        ScoringWeights {
            interaction: InteractionWeights { action: 0.40, object: 0.25, narrative: 0.20, social: 0.15 },
            state_change: StateChangeWeights { magnitude: 0.30, relation: 0.40, intrinsic: 0.30 },
            verb_table,
            full_displacement: 1.0,
            full_speed: 1.0,
            social_radius: 0.5,
        }
    }
}

impl ScoringWeights {
    /// Each weight group must sum to one and every table value lie in `[0, 1]`.
    pub fn validate(&self) -> Result<(), ScoringError> {
        let i = &self.interaction;
        let s = &self.state_change;
        let groups = [
            ("interaction", [i.action, i.object, i.narrative, i.social].to_vec()),
            ("stateChange", [s.magnitude, s.relation, s.intrinsic].to_vec()),
        ];
        for (name, ws) in groups {
            if ws.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(ScoringError::InvalidWeights(format!("{name} weight outside [0, 1]")));
            }
            let sum: f64 = ws.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ScoringError::InvalidWeights(format!("{name} weights sum to {sum}, not 1")));
            }
        }
        if let Some((v, x)) = self.verb_table.iter().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(ScoringError::InvalidWeights(format!("verbTable[{v}] = {x} outside [0, 1]")));
        }
        for (name, x) in [
            ("fullDisplacement", self.full_displacement),
            ("fullSpeed", self.full_speed),
            ("socialRadius", self.social_radius),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return Err(ScoringError::InvalidWeights(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    fn verb(&self, v: Verb) -> f64 {
        self.verb_table.get(&v).copied().unwrap_or(0.0)
    }
}

fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

fn saturating_ratio(x: f64, full: f64) -> f64 {
    if full > 0.0 {
        (x / full).min(1.0)
    } else if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// True if a user other than the actor comes within the social radius at
/// any pose sample during the event.
fn other_user_near(e: &InteractionEvent, doc: &MaredDocument, radius: f64) -> bool {
    let others: Vec<&str> =
        doc.entities.iter().filter(|x| x.kind == EntityKind::User && x.id != e.actor).map(|x| x.id.as_str()).collect();
    if others.is_empty() {
        return false;
    }
    let mut times = vec![e.t_start, e.t_end];
    for sc in &doc.state_change_events {
        if sc.subject != e.actor && !others.contains(&sc.subject.as_str()) {
            continue;
        }
        if let Some(track) = &sc.trajectory {
            times.extend(track.iter().map(|s| s.t).filter(|t| e.covers(*t)));
        }
    }
    times.iter().any(|&t| {
        let Some(actor) = doc.pose_at(&e.actor, t) else {
            return false;
        };
        others.iter().filter_map(|o| doc.pose_at(o, t)).any(|p| p.distance_to(&actor) < radius)
    })
}

/// Weighted KeyInteraction score, clamped to `[0, 1]`.
pub fn score_interaction(
    e: &InteractionEvent,
    doc: &MaredDocument,
    weights: &ScoringWeights,
) -> Result<f64, ScoringError> {
    doc.entity(&e.actor).ok_or_else(|| ScoringError::Dangling(e.actor.clone()))?;
    let target = match &e.target {
        Some(t) => Some(doc.entity(t).ok_or_else(|| ScoringError::Dangling(t.clone()))?),
        None => None,
    };
    let w = &weights.interaction;
    let action = weights.verb(e.verb);
    let object = target.map_or(0.0, |t| t.significance);
    let narrative = indicator(target.is_some_and(|t| {
        e.pre_state.relations != e.post_state.relations
            && doc.segments.iter().any(|s| s.t_start > e.t_end && s.key_objects.contains(&t.id))
    }));
    let social =
        indicator(target.is_some_and(|t| t.kind == EntityKind::User) || other_user_near(e, doc, weights.social_radius));
    Ok(clamp01(w.action * action + w.object * object + w.narrative * narrative + w.social * social))
}

/// Weighted KeyStateChange score, clamped to `[0, 1]`.
pub fn score_state_change(
    s: &StateChangeEvent,
    doc: &MaredDocument,
    weights: &ScoringWeights,
) -> Result<f64, ScoringError> {
    doc.entity(&s.subject).ok_or_else(|| ScoringError::Dangling(s.subject.clone()))?;
    if let Some(c) = &s.cause_event_id {
        doc.interaction(c).ok_or_else(|| ScoringError::Dangling(c.clone()))?;
    }
    let w = &weights.state_change;
    let (magnitude, relation, intrinsic) = match &s.change {
        StateChange::Pose { before, after } => {
            let displacement = before.distance_to(after);
            let speed = peak_speed(s, displacement);
            let m = saturating_ratio(displacement, weights.full_displacement)
                .max(saturating_ratio(speed, weights.full_speed));
            (m, 0.0, 0.0)
        }
        StateChange::Relation { .. } => (0.0, 1.0, 0.0),
        StateChange::Intrinsic { .. } => (0.0, 0.0, 1.0),
    };
    Ok(clamp01(w.magnitude * magnitude + w.relation * relation + w.intrinsic * intrinsic))
}

fn peak_speed(s: &StateChangeEvent, displacement: f64) -> f64 {
    let over = |d: f64, dt: f64| {
        if dt > 0.0 {
            d / dt
        } else if d > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    match &s.trajectory {
        Some(track) if track.len() >= 2 => {
            track.windows(2).map(|w| over(w[0].pose.distance_to(&w[1].pose), w[1].t.0 - w[0].t.0)).fold(0.0, f64::max)
        }
        _ => over(displacement, s.t_end.0 - s.t_start.0),
    }
}

/// Every event of a document with its score, interactions first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEvent {
    pub id: String,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub score: f64,
    pub entities: Vec<String>,
}

pub fn score_all(doc: &MaredDocument, weights: &ScoringWeights) -> Result<Vec<ScoredEvent>, ScoringError> {
    let mut out = Vec::with_capacity(doc.interaction_events.len() + doc.state_change_events.len());
    for e in &doc.interaction_events {
        let mut entities = vec![e.actor.clone()];
        entities.extend(e.target.clone());
        out.push(ScoredEvent {
            id: e.id.clone(),
            t_start: e.t_start,
            t_end: e.t_end,
            score: score_interaction(e, doc, weights)?,
            entities,
        });
    }
    for s in &doc.state_change_events {
        out.push(ScoredEvent {
            id: s.id.clone(),
            t_start: s.t_start,
            t_end: s.t_end,
            score: score_state_change(s, doc, weights)?,
            entities: vec![s.subject.clone()],
        });
    }
    Ok(out)
}

/// Candidate keyframe times: interaction starts and ends plus state-change ends.
pub fn candidate_times(doc: &MaredDocument) -> Vec<f64> {
    let mut times: Vec<f64> = doc
        .interaction_events
        .iter()
        .flat_map(|e| [e.t_start.0, e.t_end.0])
        .chain(doc.state_change_events.iter().map(|s| s.t_end.0))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Significance at a candidate time and the events attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct Significance {
    pub t: f64,
    pub score: f64,
    /// Indices into the scored event list, ascending.
    pub sources: Vec<usize>,
}

// Scores are clamped into [0, 1], so their bit patterns order like the values.
fn score_key(score: f64) -> u64 {
    score.to_bits()
}

/// Sweeps the sorted candidate times once, keeping the set of covering
/// spans ordered by score.
pub fn significance_profile(events: &[ScoredEvent], times: &[f64]) -> Vec<Significance> {
    let mut by_start: Vec<usize> = (0..events.len()).collect();
    by_start.sort_by(|&a, &b| events[a].t_start.0.total_cmp(&events[b].t_start.0));
    let mut next = 0;
    let mut active: BTreeSet<(u64, usize)> = BTreeSet::new();
    let mut expiry: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();

    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        while next < by_start.len() && events[by_start[next]].t_start.0 <= t {
            let i = by_start[next];
            active.insert((score_key(events[i].score), i));
            expiry.push(Reverse((events[i].t_end.0.to_bits(), i)));
            next += 1;
        }
        while let Some(Reverse((_, i))) = expiry.peek().copied() {
            if events[i].t_end.0 >= t {
                break;
            }
            expiry.pop();
            active.remove(&(score_key(events[i].score), i));
        }
        let Some(&(best, _)) = active.last() else {
            out.push(Significance { t, score: 0.0, sources: Vec::new() });
            continue;
        };
        let mut sources: Vec<usize> = active.iter().rev().take_while(|(k, _)| *k == best).map(|&(_, i)| i).collect();
        sources.sort_unstable();
        out.push(Significance { t, score: f64::from_bits(best), sources });
    }
    out
}

/// Single-linkage grouping of candidates closer than `window`; each group is
/// represented by its highest-significance member (earliest on ties).
pub fn merge_candidates(profile: Vec<Significance>, window: f64) -> Vec<Significance> {
    let mut out: Vec<Significance> = Vec::new();
    let mut last_t: Option<f64> = None;
    for s in profile {
        let joins = last_t.is_some_and(|l| s.t - l < window);
        last_t = Some(s.t);
        match out.last_mut() {
            Some(rep) if joins => {
                if s.score > rep.score {
                    *rep = s;
                }
            }
            _ => out.push(s),
        }
    }
    out
}

/// Scores every event, merges nearby candidates and keeps those the
/// threshold admits.
pub fn distill(
    doc: &MaredDocument,
    threshold: Threshold,
    weights: &ScoringWeights,
) -> Result<KeyframedDocument, ScoringError> {
    let events = score_all(doc, weights)?;
    let profile = significance_profile(&events, &candidate_times(doc));
    let keyframes = merge_candidates(profile, MERGE_WINDOW)
        .into_iter()
        .filter(|s| threshold.admits(s.score))
        .map(|s| build_keyframe(doc, &events, s))
        .collect();
    Ok(KeyframedDocument { document: doc.clone(), threshold: threshold.value(), keyframes })
}

fn build_keyframe(doc: &MaredDocument, events: &[ScoredEvent], s: Significance) -> Keyframe {
    let t = Timestamp(s.t);
    let involved: BTreeSet<&str> =
        s.sources.iter().flat_map(|&i| events[i].entities.iter().map(String::as_str)).collect();
    Keyframe {
        t,
        score: s.score,
        sources: s.sources.iter().map(|&i| events[i].id.clone()).collect(),
        anchors: involved
            .into_iter()
            .filter_map(|id| doc.pose_at(id, t).map(|pose| EntityPose { entity: id.to_owned(), pose }))
            .collect(),
    }
}
