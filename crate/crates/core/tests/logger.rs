// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use mared_core::fixtures::{cup_capture, drone_capture, random_capture, RandomCaptureSpec};
use mared_core::logger::{
    detect_state_changes, ingest, ingest_with_report, ActionAnnotation, LoggerConfig, LoggerError, Phase, RawCapture,
    RawEntity, RawFrame,
};
use mared_core::model::{InteractionEvent, Pose, PropertyValue, SemanticRelation, StateChange, StateChangeKind, Verb};
use mared_core::validate::validate_document;
use proptest::prelude::*;

fn names<'a>(rels: impl IntoIterator<Item = &'a SemanticRelation>) -> Vec<String> {
    rels.into_iter().map(ToString::to_string).collect()
}

#[test]
fn cup_grasp_moves_cup_from_table_to_hand() {
    let doc = ingest(&cup_capture(), &LoggerConfig::default()).unwrap();
    assert_eq!(doc.interaction_events.len(), 1);
    let grasp = &doc.interaction_events[0];
    assert_eq!(grasp.verb, Verb::Grasp);
    assert_eq!((grasp.t_start.0, grasp.t_end.0), (1.0, 1.4));
    assert_eq!(names(&grasp.pre_state.relations), vec!["on(cup,table)"]);
    assert_eq!(names(&grasp.post_state.relations), vec!["heldBy(cup,u1)"]);
}

#[test]
fn lamp_switch_is_an_intrinsic_change() {
    let doc = ingest(&cup_capture(), &LoggerConfig::default()).unwrap();
    let lamp: Vec<_> = doc.state_change_events.iter().filter(|s| s.subject == "lamp").collect();
    assert_eq!(lamp.len(), 1);
    match &lamp[0].change {
        StateChange::Intrinsic { before, after } => {
            assert_eq!(before.get("is_on"), Some(&PropertyValue::Bool(false)));
            assert_eq!(after.get("is_on"), Some(&PropertyValue::Bool(true)));
        }
        other => panic!("expected intrinsic change, got {other:?}"),
    }
    assert_eq!(lamp[0].t_end.0, 3.0);
}

#[test]
fn relation_change_during_grasp_names_its_cause() {
    let doc = ingest(&cup_capture(), &LoggerConfig::default()).unwrap();
    let grasp_id = &doc.interaction_events[0].id;
    let change = doc
        .state_change_events
        .iter()
        .find(|s| {
            matches!(&s.change, StateChange::Relation { before, after }
                if names(before) == ["on(cup,table)"] && names(after) == ["heldBy(cup,u1)"])
        })
        .expect("on -> heldBy change");
    assert_eq!(change.cause_event_id.as_ref(), Some(grasp_id));
    assert_eq!((change.t_start.0, change.t_end.0), (1.0, 1.2));
}

fn sliding_box(steps: &[f64]) -> RawCapture {
    let mut x = 0.0;
    let mut frames = vec![];
    for (i, dx) in std::iter::once(&0.0).chain(steps).enumerate() {
        x += dx;
        let mut f = RawFrame::at(i as f64);
        f.entities.push(RawEntity {
            id: "box".into(),
            pose: Pose::at([x, 0.0, 0.5]),
            bbox: [0.2; 3],
            properties: Default::default(),
            kind: None,
            label: None,
            significance: None,
            hand: None,
        });
        frames.push(f);
    }
    RawCapture { frames }
}

#[test]
fn small_step_is_not_a_pose_change() {
    let changes = detect_state_changes(&sliding_box(&[0.05]), &[], &LoggerConfig::default()).unwrap();
    assert!(changes.is_empty());
}

#[test]
fn consecutive_steps_merge_into_one_pose_change() {
    let changes = detect_state_changes(&sliding_box(&[0.1; 5]), &[], &LoggerConfig::default()).unwrap();
    assert_eq!(changes.len(), 1);
    let sc = &changes[0];
    assert_eq!(sc.kind(), StateChangeKind::Pose);
    assert_eq!(sc.trajectory.as_ref().map(Vec::len), Some(6));
    assert_eq!((sc.t_start.0, sc.t_end.0), (0.0, 5.0));
}

#[test]
fn static_scene_has_one_segment_and_no_events() {
    let doc = ingest(&sliding_box(&[0.0, 0.0]), &LoggerConfig::default()).unwrap();
    assert_eq!(doc.entities.len(), 1);
    assert_eq!(doc.segments.len(), 1);
    assert_eq!((doc.segments[0].t_start.0, doc.segments[0].t_end.0), (0.0, 2.0));
    assert!(doc.interaction_events.is_empty());
    assert!(doc.state_change_events.is_empty());
}

#[test]
fn drone_segments_follow_markers() {
    let doc = ingest(&drone_capture(), &LoggerConfig::default()).unwrap();
    let segs: Vec<_> = doc.segments.iter().map(|s| (s.label.as_str(), s.t_start.0, s.t_end.0)).collect();
    assert_eq!(segs, vec![("drone principles", 0.0, 10.0), ("drone assembly", 10.0, 20.0)]);
    let verbs: Vec<_> = doc.interaction_events.iter().map(|e| (e.verb, e.t_start.0, e.t_end.0)).collect();
    assert_eq!(
        verbs,
        vec![
            (Verb::Speak, 1.0, 3.0),
            (Verb::Gesture, 2.0, 3.0),
            (Verb::Grasp, 5.0, 10.0),
            (Verb::Grasp, 10.0, 15.0),
            (Verb::Press, 16.0, 17.0),
            (Verb::Speak, 18.0, 19.0),
        ]
    );
    assert_eq!(doc.header.anchors.len(), 4);
}

#[test]
fn non_monotone_timestamps_rejected() {
    let mut raw = cup_capture();
    raw.frames.swap(2, 3);
    assert!(matches!(ingest(&raw, &LoggerConfig::default()), Err(LoggerError::RejectedInput(_))));
    assert!(matches!(ingest(&RawCapture::default(), &LoggerConfig::default()), Err(LoggerError::RejectedInput(_))));
}

fn without_grasp_end() -> RawCapture {
    let mut raw = cup_capture();
    for f in &mut raw.frames {
        f.actions.retain(|a| a.phase != Phase::End);
    }
    raw
}

#[test]
fn unmatched_begin_dropped_with_warning() {
    let report = ingest_with_report(&without_grasp_end(), &LoggerConfig::default()).unwrap();
    assert!(report.document.interaction_events.is_empty());
    assert!(report.warnings.iter().any(|w| w.contains("no end")));
}

#[test]
fn unmatched_begin_is_an_error_when_strict() {
    let config = LoggerConfig { strict_truncation: true, ..LoggerConfig::default() };
    match ingest(&without_grasp_end(), &config) {
        Err(LoggerError::TruncatedAction { actor, verb, .. }) => {
            assert_eq!(actor, "u1");
            assert_eq!(verb, Verb::Grasp);
        }
        other => panic!("expected truncation error, got {other:?}"),
    }
}

#[test]
fn end_without_begin_rejected() {
    let mut raw = cup_capture();
    for f in &mut raw.frames {
        f.actions.retain(|a| a.phase != Phase::Begin);
    }
    assert!(matches!(ingest(&raw, &LoggerConfig::default()), Err(LoggerError::RejectedInput(_))));
}

#[test]
fn unknown_verb_becomes_gesture() {
    let mut raw = cup_capture();
    for f in &mut raw.frames {
        for a in &mut f.actions {
            a.verb = "juggle".into();
        }
    }
    let report = ingest_with_report(&raw, &LoggerConfig::default()).unwrap();
    assert_eq!(report.document.interaction_events[0].verb, Verb::Gesture);
    assert!(report.warnings.iter().any(|w| w.contains("juggle")));
}

#[test]
fn thresholds_come_from_config() {
    let config = LoggerConfig { min_displacement: 0.04, ..LoggerConfig::default() };
    let changes = detect_state_changes(&sliding_box(&[0.05]), &[], &config).unwrap();
    assert_eq!(changes.len(), 1);
}

type EventKey = (String, Verb, Option<String>, u64, u64, Vec<String>, Vec<String>, Option<String>);

fn key(e: &InteractionEvent) -> EventKey {
    (
        e.actor.clone(),
        e.verb,
        e.target.clone(),
        e.t_start.0.to_bits(),
        e.t_end.0.to_bits(),
        names(&e.pre_state.relations),
        names(&e.post_state.relations),
        e.payload.clone(),
    )
}

/// Cuts `raw` before frame `k`. The second half starts with the carried
/// attachment set made explicit and re-opens every action still running.
fn split(raw: &RawCapture, k: usize) -> (RawCapture, RawCapture, Vec<ActionAnnotation>) {
    let head = RawCapture { frames: raw.frames[..k].to_vec() };
    let mut tail = RawCapture { frames: raw.frames[k..].to_vec() };

    let mut attachments = None;
    let mut open: Vec<ActionAnnotation> = Vec::new();
    for f in &raw.frames[..k] {
        if f.attachments.is_some() {
            attachments = f.attachments.clone();
        }
        for a in &f.actions {
            let same = |o: &ActionAnnotation| o.actor == a.actor && o.verb == a.verb && o.target == a.target;
            match a.phase {
                Phase::Begin => open.push(a.clone()),
                Phase::End => open.retain(|o| !same(o)),
                Phase::Update => {}
            }
        }
    }
    let first = &mut tail.frames[0];
    if first.attachments.is_none() {
        first.attachments = attachments.or(Some(Vec::new()));
    }
    for (i, a) in open.iter().enumerate() {
        first.actions.insert(i, a.clone());
    }
    (head, tail, open)
}

fn spans_within(raw: &RawCapture) -> (f64, f64) {
    (raw.frames[0].t.0, raw.frames.last().unwrap().t.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_output_is_valid(seed in any::<u64>(), frames in 1usize..60, users in 1usize..3, objects in 0usize..5, markers in any::<bool>()) {
        let raw = random_capture(seed, RandomCaptureSpec { frames, users, objects, markers });
        let doc = ingest(&raw, &LoggerConfig::default()).unwrap();
        prop_assert_eq!(validate_document(&doc), vec![]);
    }

    #[test]
    fn ingest_is_deterministic(seed in any::<u64>()) {
        let raw = random_capture(seed, RandomCaptureSpec::default());
        let a = ingest(&raw, &LoggerConfig::default()).unwrap();
        let b = ingest(&raw.clone(), &LoggerConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_closed_pair_becomes_one_event(seed in any::<u64>(), frames in 1usize..60) {
        let raw = random_capture(seed, RandomCaptureSpec { frames, ..RandomCaptureSpec::default() });
        let pairs = raw.frames.iter().flat_map(|f| &f.actions).filter(|a| a.phase == Phase::End).count();
        let doc = ingest(&raw, &LoggerConfig::default()).unwrap();
        prop_assert_eq!(doc.interaction_events.len(), pairs);
    }

    #[test]
    fn split_capture_keeps_contained_pairs(seed in any::<u64>(), frames in 2usize..50, cut in 0.0f64..1.0) {
        let raw = random_capture(seed, RandomCaptureSpec { frames, ..RandomCaptureSpec::default() });
        let k = 1 + ((frames - 1) as f64 * cut) as usize;
        let k = k.min(frames - 1);
        let (head, tail, reopened) = split(&raw, k);
        let whole = ingest(&raw, &LoggerConfig::default()).unwrap();
        let a = ingest(&head, &LoggerConfig::default()).unwrap();
        let b = ingest(&tail, &LoggerConfig::default()).unwrap();

        for (half, doc) in [(&head, &a), (&tail, &b)] {
            let (lo, hi) = spans_within(half);
            let expected: BTreeSet<EventKey> = whole
                .interaction_events
                .iter()
                .filter(|e| lo <= e.t_start.0 && e.t_end.0 <= hi)
                .map(key)
                .collect();
            // actions re-opened at the cut are not contained pairs
            let got: BTreeSet<EventKey> = doc
                .interaction_events
                .iter()
                .filter(|e| {
                    !(std::ptr::eq(half, &tail)
                        && e.t_start.0 == lo
                        && reopened.iter().any(|a| {
                            a.actor == e.actor && Verb::parse(&a.verb).unwrap_or(Verb::Gesture) == e.verb && a.target == e.target
                        }))
                })
                .map(key)
                .collect();
            prop_assert_eq!(got, expected);
        }
    }
}

#[test]
fn segments_do_not_overlap_on_random_captures() {
    for seed in 0..50 {
        let raw = random_capture(seed, RandomCaptureSpec { markers: seed % 2 == 0, ..RandomCaptureSpec::default() });
        let doc = ingest(&raw, &LoggerConfig::default()).unwrap();
        for w in doc.segments.windows(2) {
            assert!(w[0].t_end <= w[1].t_start, "seed {seed}");
        }
    }
}
