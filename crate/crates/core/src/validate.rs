// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Structural and referential checks for documents.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    EntityKind, KeyframedDocument, MaredDocument, Pose, PropertyMap, RelationSet, StateChange, Timestamp,
    SUPPORTED_VERSIONS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Rule {
    DanglingReference,
    DuplicateId,
    EmptySpan,
    InvertedSpan,
    InvalidTime,
    NonFinite,
    NonUnitQuaternion,
    OutOfRange,
    UnsortedSegments,
    OverlappingSegments,
    OutsideSegment,
    ActorNotUser,
    SelfRelation,
    UnchangedState,
    TrajectoryOrder,
    UnsupportedVersion,
    UnsortedKeyframes,
    EmptySources,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::DanglingReference => "danglingReference",
            Rule::DuplicateId => "duplicateId",
            Rule::EmptySpan => "emptySpan",
            Rule::InvertedSpan => "invertedSpan",
            Rule::InvalidTime => "invalidTime",
            Rule::NonFinite => "nonFinite",
            Rule::NonUnitQuaternion => "nonUnitQuaternion",
            Rule::OutOfRange => "outOfRange",
            Rule::UnsortedSegments => "unsortedSegments",
            Rule::OverlappingSegments => "overlappingSegments",
            Rule::OutsideSegment => "outsideSegment",
            Rule::ActorNotUser => "actorNotUser",
            Rule::SelfRelation => "selfRelation",
            Rule::UnchangedState => "unchangedState",
            Rule::TrajectoryOrder => "trajectoryOrder",
            Rule::UnsupportedVersion => "unsupportedVersion",
            Rule::UnsortedKeyframes => "unsortedKeyframes",
            Rule::EmptySources => "emptySources",
        }
    }
}

/// One broken invariant: which rule, on which field, for which id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub rule: Rule,
    pub field: String,
    pub id: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) at {}", self.rule.name(), self.id, self.field)
    }
}

struct Checker<'a> {
    doc: &'a MaredDocument,
    entities: HashSet<&'a str>,
    out: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn push(&mut self, rule: Rule, field: impl Into<String>, id: impl Into<String>) {
        self.out.push(Violation { rule, field: field.into(), id: id.into() });
    }

    fn entity_ref(&mut self, field: String, id: &str) -> bool {
        if self.entities.contains(id) {
            true
        } else {
            self.push(Rule::DanglingReference, field, id);
            false
        }
    }

    fn time(&mut self, field: String, owner: &str, t: Timestamp) -> bool {
        if t.is_valid() {
            true
        } else {
            self.push(Rule::InvalidTime, field, owner);
            false
        }
    }

    fn span(&mut self, field: &str, owner: &str, start: Timestamp, end: Timestamp, strict: bool) -> bool {
        let ok = self.time(format!("{field}.tStart"), owner, start) & self.time(format!("{field}.tEnd"), owner, end);
        if !ok {
            return false;
        }
        if strict && start == end {
            self.push(Rule::EmptySpan, field, owner);
            false
        } else if start > end {
            self.push(Rule::InvertedSpan, field, owner);
            false
        } else {
            true
        }
    }

    fn pose(&mut self, field: String, owner: &str, pose: &Pose) {
        if !pose.is_finite() {
            self.push(Rule::NonFinite, field, owner);
        } else if !pose.is_unit() {
            self.push(Rule::NonUnitQuaternion, field, owner);
        }
    }

    fn properties(&mut self, field: String, owner: &str, props: &PropertyMap) {
        if props.values().any(|v| !v.is_finite()) {
            self.push(Rule::NonFinite, field, owner);
        }
    }

    fn relations(&mut self, field: &str, owner: &str, rels: &RelationSet) {
        for r in rels {
            let a = self.entity_ref(format!("{field}.subject"), &r.subject);
            let b = self.entity_ref(format!("{field}.object"), &r.object);
            if a && b && r.subject == r.object {
                self.push(Rule::SelfRelation, field, owner);
            }
        }
    }

    fn in_some_segment(&self, start: Timestamp, end: Timestamp) -> bool {
        self.doc.segments.iter().any(|s| s.contains_span(start, end))
    }

    fn unique_ids<'b>(&mut self, field: &str, ids: impl Iterator<Item = &'b str>, seen: &mut HashSet<&'b str>) {
        for id in ids {
            if !seen.insert(id) {
                self.push(Rule::DuplicateId, field, id);
            }
        }
    }
}

/// Every invariant of the document model; empty iff the document is valid.
pub fn validate_document(doc: &MaredDocument) -> Vec<Violation> {
    let mut c = Checker { doc, entities: HashSet::new(), out: Vec::new() };

    if !SUPPORTED_VERSIONS.contains(&doc.mared_version.as_str()) {
        c.push(Rule::UnsupportedVersion, "maredVersion", doc.mared_version.clone());
    }

    for (i, a) in doc.header.anchors.iter().enumerate() {
        c.pose(format!("header.anchors[{i}].pose"), &a.id, &a.pose);
    }
    let mut anchor_ids = HashSet::new();
    c.unique_ids("header.anchors", doc.header.anchors.iter().map(|a| a.id.as_str()), &mut anchor_ids);

    let mut ids = HashSet::new();
    c.unique_ids("entities", doc.entities.iter().map(|e| e.id.as_str()), &mut ids);
    c.entities = ids;
    for (i, e) in doc.entities.iter().enumerate() {
        if !(0.0..=1.0).contains(&e.significance) {
            c.push(Rule::OutOfRange, format!("entities[{i}].significance"), &e.id);
        }
        if !e.bbox.iter().all(|v| v.is_finite() && *v > 0.0) {
            c.push(Rule::OutOfRange, format!("entities[{i}].bbox"), &e.id);
        }
        c.pose(format!("entities[{i}].pose"), &e.id, &e.pose);
        c.properties(format!("entities[{i}].properties"), &e.id, &e.properties);
    }

    let mut event_ids = HashSet::new();
    c.unique_ids("segments", doc.segments.iter().map(|s| s.id.as_str()), &mut HashSet::new());
    c.unique_ids("interactionEvents", doc.interaction_events.iter().map(|e| e.id.as_str()), &mut event_ids);
    c.unique_ids("stateChangeEvents", doc.state_change_events.iter().map(|e| e.id.as_str()), &mut event_ids);

    let mut prev_end: Option<Timestamp> = None;
    let mut prev_start: Option<Timestamp> = None;
    for (i, s) in doc.segments.iter().enumerate() {
        let field = format!("segments[{i}]");
        let ok = c.span(&field, &s.id, s.t_start, s.t_end, true);
        for p in &s.participants {
            c.entity_ref(format!("{field}.participants"), p);
        }
        for k in &s.key_objects {
            c.entity_ref(format!("{field}.keyObjects"), k);
        }
        if !ok {
            continue;
        }
        if prev_start.is_some_and(|p| s.t_start < p) {
            c.push(Rule::UnsortedSegments, field.clone(), &s.id);
        } else if prev_end.is_some_and(|p| s.t_start < p) {
            c.push(Rule::OverlappingSegments, field.clone(), &s.id);
        }
        prev_start = Some(s.t_start);
        prev_end = Some(prev_end.map_or(s.t_end, |p| if s.t_end > p { s.t_end } else { p }));
    }

    for (i, e) in doc.interaction_events.iter().enumerate() {
        let field = format!("interactionEvents[{i}]");
        if c.entity_ref(format!("{field}.actor"), &e.actor)
            && doc.entity(&e.actor).is_some_and(|a| a.kind != EntityKind::User)
        {
            c.push(Rule::ActorNotUser, format!("{field}.actor"), &e.id);
        }
        if let Some(t) = &e.target {
            c.entity_ref(format!("{field}.target"), t);
        }
        let span_ok = c.span(&field, &e.id, e.t_start, e.t_end, false);
        match doc.segment(&e.segment_id) {
            None => c.push(Rule::DanglingReference, format!("{field}.segmentId"), &e.segment_id),
            Some(seg) if span_ok && !seg.contains_span(e.t_start, e.t_end) => {
                c.push(Rule::OutsideSegment, field.clone(), &e.id)
            }
            Some(_) => {}
        }
        c.relations(&format!("{field}.preState.relations"), &e.id, &e.pre_state.relations);
        c.relations(&format!("{field}.postState.relations"), &e.id, &e.post_state.relations);
        c.properties(format!("{field}.preState.properties"), &e.id, &e.pre_state.properties);
        c.properties(format!("{field}.postState.properties"), &e.id, &e.post_state.properties);
    }

    for (i, s) in doc.state_change_events.iter().enumerate() {
        let field = format!("stateChangeEvents[{i}]");
        c.entity_ref(format!("{field}.subject"), &s.subject);
        let span_ok = c.span(&field, &s.id, s.t_start, s.t_end, false);
        if span_ok && !c.in_some_segment(s.t_start, s.t_end) {
            c.push(Rule::OutsideSegment, field.clone(), &s.id);
        }
        if s.change.is_noop() {
            c.push(Rule::UnchangedState, field.clone(), &s.id);
        }
        match &s.change {
            StateChange::Pose { before, after } => {
                c.pose(format!("{field}.before"), &s.id, before);
                c.pose(format!("{field}.after"), &s.id, after);
            }
            StateChange::Relation { before, after } => {
                c.relations(&format!("{field}.before"), &s.id, before);
                c.relations(&format!("{field}.after"), &s.id, after);
            }
            StateChange::Intrinsic { before, after } => {
                c.properties(format!("{field}.before"), &s.id, before);
                c.properties(format!("{field}.after"), &s.id, after);
            }
        }
        if let Some(track) = &s.trajectory {
            let mut last: Option<Timestamp> = None;
            for (j, sample) in track.iter().enumerate() {
                let in_span = sample.t.is_valid() && s.t_start <= sample.t && sample.t <= s.t_end;
                let increasing = last.is_none_or(|l| sample.t > l);
                if !in_span || !increasing {
                    c.push(Rule::TrajectoryOrder, format!("{field}.trajectory[{j}]"), &s.id);
                    break;
                }
                c.pose(format!("{field}.trajectory[{j}].pose"), &s.id, &sample.pose);
                last = Some(sample.t);
            }
        }
        if let Some(cause) = &s.cause_event_id {
            if doc.interaction(cause).is_none() {
                c.push(Rule::DanglingReference, format!("{field}.causeEventId"), cause);
            }
        }
    }

    c.out
}

/// Document checks plus threshold and keyframe invariants.
pub fn validate_keyframed(kdoc: &KeyframedDocument) -> Vec<Violation> {
    let mut out = validate_document(&kdoc.document);
    let doc = &kdoc.document;
    let push = |out: &mut Vec<Violation>, rule, field: String, id: String| out.push(Violation { rule, field, id });
    if !(0.0..=1.0).contains(&kdoc.threshold) {
        push(&mut out, Rule::OutOfRange, "threshold".into(), kdoc.threshold.to_string());
    }
    let mut last: Option<Timestamp> = None;
    for (i, k) in kdoc.keyframes.iter().enumerate() {
        let field = format!("keyframes[{i}]");
        let id = k.t.0.to_string();
        if !k.t.is_valid() {
            push(&mut out, Rule::InvalidTime, format!("{field}.t"), id.clone());
        } else if last.is_some_and(|l| k.t <= l) {
            push(&mut out, Rule::UnsortedKeyframes, format!("{field}.t"), id.clone());
        }
        last = Some(k.t);
        if !(0.0..=1.0).contains(&k.score) {
            push(&mut out, Rule::OutOfRange, format!("{field}.score"), id.clone());
        }
        if k.sources.is_empty() {
            push(&mut out, Rule::EmptySources, format!("{field}.sources"), id.clone());
        }
        for s in &k.sources {
            if doc.interaction(s).is_none() && doc.state_change(s).is_none() {
                push(&mut out, Rule::DanglingReference, format!("{field}.sources"), s.clone());
            }
        }
        for a in &k.anchors {
            if doc.entity(&a.entity).is_none() {
                push(&mut out, Rule::DanglingReference, format!("{field}.anchors"), a.entity.clone());
            }
            if !a.pose.is_finite() {
                push(&mut out, Rule::NonFinite, format!("{field}.anchors"), a.entity.clone());
            }
        }
    }
    out
}
