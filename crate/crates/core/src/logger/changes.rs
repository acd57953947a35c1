// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use crate::model::{
    InteractionEvent, PropertyMap, RelationSet, StateChange, StateChangeEvent, Timestamp, TrajectorySample,
};

use super::{LoggerConfig, LoggerError, RawCapture, ResolvedCapture};

// Absorbs rounding in per-frame deltas such as 0.3 - 0.2.
const THRESHOLD_SLACK: f64 = 1e-9;

/// State-change events between consecutive frames of `raw`, with causes
/// attributed from `events`.
pub fn detect_state_changes(
    raw: &RawCapture,
    events: &[InteractionEvent],
    config: &LoggerConfig,
) -> Result<Vec<StateChangeEvent>, LoggerError> {
    super::state_changes_of(raw, events, config)
}

pub(crate) fn detect(
    capture: &ResolvedCapture,
    events: &[InteractionEvent],
    config: &LoggerConfig,
    warnings: &mut Vec<String>,
) -> Vec<StateChangeEvent> {
    let mut out = Vec::new();
    for entity in &capture.entities {
        pose_changes(capture, &entity.id, config, warnings, &mut out);
        relation_changes(capture, &entity.id, &mut out);
        intrinsic_changes(capture, &entity.id, &mut out);
    }
    out.sort_by(|a, b| {
        a.t_start
            .0
            .total_cmp(&b.t_start.0)
            .then(a.t_end.0.total_cmp(&b.t_end.0))
            .then_with(|| a.subject.cmp(&b.subject))
            .then(a.kind().cmp(&b.kind()))
    });
    for (n, sc) in out.iter_mut().enumerate() {
        sc.id = format!("sc-{}", n + 1);
        sc.cause_event_id = attribute_cause(sc, events);
    }
    out
}

fn new_change(subject: &str, t_start: Timestamp, t_end: Timestamp, change: StateChange) -> StateChangeEvent {
    StateChangeEvent {
        id: String::new(),
        subject: subject.to_owned(),
        t_start,
        t_end,
        change,
        trajectory: None,
        cause_event_id: None,
    }
}

/// Consecutive above-threshold steps merge into one event whose trajectory
/// holds every frame from the last still pose to the final moving one.
fn pose_changes(
    capture: &ResolvedCapture,
    id: &str,
    config: &LoggerConfig,
    warnings: &mut Vec<String>,
    out: &mut Vec<StateChangeEvent>,
) {
    let min_angle = config.min_rotation_deg.to_radians();
    let present: Vec<usize> = (0..capture.times.len()).filter(|&i| capture.samples[i].contains_key(id)).collect();
    let moving = |i: usize| {
        let a = &capture.samples[i - 1][id].pose;
        let b = &capture.samples[i][id].pose;
        a.distance_to(b) >= config.min_displacement - THRESHOLD_SLACK || a.angle_to(b) >= min_angle - THRESHOLD_SLACK
    };
    let mut run_start: Option<usize> = None;
    let first = present.first().copied().unwrap_or(0);
    for i in present.iter().copied().filter(|&i| i > first) {
        let step = moving(i);
        match (step, run_start) {
            (true, None) => run_start = Some(i - 1),
            (false, Some(start)) => {
                emit_pose_run(capture, id, start, i - 1, warnings, out);
                run_start = None;
            }
            _ => {}
        }
    }
    if let (Some(start), Some(&last)) = (run_start, present.last()) {
        emit_pose_run(capture, id, start, last, warnings, out);
    }
}

fn emit_pose_run(
    capture: &ResolvedCapture,
    id: &str,
    from: usize,
    to: usize,
    warnings: &mut Vec<String>,
    out: &mut Vec<StateChangeEvent>,
) {
    let before = capture.samples[from][id].pose;
    let after = capture.samples[to][id].pose;
    if before == after {
        warnings.push(format!(
            "{id} moved between {} and {} but returned to its start pose; no pose event",
            capture.times[from].0, capture.times[to].0
        ));
        return;
    }
    let trajectory =
        (from..=to).map(|i| TrajectorySample { t: capture.times[i], pose: capture.samples[i][id].pose }).collect();
    let mut sc = new_change(id, capture.times[from], capture.times[to], StateChange::Pose { before, after });
    sc.trajectory = Some(trajectory);
    out.push(sc);
}

fn relation_changes(capture: &ResolvedCapture, id: &str, out: &mut Vec<StateChangeEvent>) {
    let of = |i: usize| -> RelationSet { capture.relations[i].iter().filter(|r| r.subject == id).cloned().collect() };
    let mut prev = of(0);
    for i in 1..capture.times.len() {
        let cur = of(i);
        if cur != prev {
            out.push(new_change(
                id,
                capture.times[i - 1],
                capture.times[i],
                StateChange::Relation { before: prev, after: cur.clone() },
            ));
        }
        prev = cur;
    }
}

fn intrinsic_changes(capture: &ResolvedCapture, id: &str, out: &mut Vec<StateChangeEvent>) {
    for i in 1..capture.times.len() {
        let (Some(a), Some(b)) = (capture.samples[i - 1].get(id), capture.samples[i].get(id)) else {
            continue;
        };
        let mut before = PropertyMap::new();
        let mut after = PropertyMap::new();
        for (k, v) in &a.properties {
            if b.properties.get(k) != Some(v) {
                before.insert(k.clone(), v.clone());
                if let Some(nv) = b.properties.get(k) {
                    after.insert(k.clone(), nv.clone());
                }
            }
        }
        for (k, v) in &b.properties {
            if !a.properties.contains_key(k) {
                after.insert(k.clone(), v.clone());
            }
        }
        if before != after {
            out.push(new_change(id, capture.times[i - 1], capture.times[i], StateChange::Intrinsic { before, after }));
        }
    }
}

/// The unique overlapping interaction, preferring ones that involve the subject.
fn attribute_cause(sc: &StateChangeEvent, events: &[InteractionEvent]) -> Option<String> {
    let overlapping: Vec<&InteractionEvent> =
        events.iter().filter(|e| e.t_start <= sc.t_end && sc.t_start <= e.t_end).collect();
    let involved: Vec<&&InteractionEvent> = overlapping
        .iter()
        .filter(|e| e.actor == sc.subject || e.target.as_deref() == Some(sc.subject.as_str()))
        .collect();
    match (involved.as_slice(), overlapping.as_slice()) {
        ([only], _) => Some(only.id.clone()),
        ([], [only]) => Some(only.id.clone()),
        _ => None,
    }
}
