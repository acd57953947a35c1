// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Raw capture ingest: turns timestamped frames with annotated action phases
//! into a validated [`MaredDocument`].
//!
//! Action semantics are not inferred. Each frame carries annotation records
//! (`begin`/`update`/`end` phases keyed by actor, verb and target) and
//! optional segment markers; geometry only feeds the relation predicates and
//! the pose-change detector.

mod changes;
mod segments;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Entity, EntityKind, Header, InteractionEvent, MaredDocument, Pose, PropertyMap, RelationSet, SpaceAnchor,
    StateChangeEvent, StateSnapshot, Timestamp, Vec3, Verb, MARED_VERSION,
};
use crate::relation::{relate_scene, EntityState, RelateContext, RelateError, RelationThresholds};
use crate::validate::{validate_document, Violation};

pub use changes::detect_state_changes;
pub use segments::{build_segments, CaptureExtent, EventSpan, TimedMarker};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoggerError {
    #[error("rejected input: {0}")]
    RejectedInput(String),
    #[error("truncated action: {actor} {verb} {target} begun at {t_start} never ended")]
    TruncatedAction { actor: String, verb: Verb, target: String, t_start: f64 },
    #[error("malformed markers: {0}")]
    MalformedMarkers(String),
    #[error("ingest produced an invalid document: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    InvalidOutput(Vec<Violation>),
}

impl From<RelateError> for LoggerError {
    fn from(e: RelateError) -> Self {
        LoggerError::RejectedInput(e.to_string())
    }
}

/// Ordered capture frames; timestamps strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawCapture {
    pub frames: Vec<RawFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RawFrame {
    pub t: Timestamp,
    #[serde(default)]
    pub entities: Vec<RawEntity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<ActionAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub markers: Vec<SegmentMarker>,
    /// Attached `(part, base)` pairs; `None` keeps the previous frame's set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachments: Option<Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<SpaceAnchor>,
}

impl RawFrame {
    pub fn at(t: f64) -> Self {
        RawFrame {
            t: Timestamp(t),
            entities: Vec::new(),
            actions: Vec::new(),
            markers: Vec::new(),
            attachments: None,
            anchors: Vec::new(),
        }
    }
}

/// Per-frame entity observation. Descriptive fields are read from the first
/// observation; entities missing from a frame keep their last observed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RawEntity {
    pub id: String,
    pub pose: Pose,
    pub bbox: Vec3,
    #[serde(default, skip_serializing_if = "PropertyMap::is_empty")]
    pub properties: PropertyMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<EntityKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Phase {
    Begin,
    Update,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ActionAnnotation {
    pub actor: String,
    /// Free text; anything outside the closed vocabulary becomes `gesture`.
    pub verb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MarkerKind {
    SegmentStart,
    SegmentEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SegmentMarker {
    pub kind: MarkerKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub participants: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub key_objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LoggerConfig {
    /// Event gap that starts a new clustered segment, seconds.
    pub gap_seconds: f64,
    /// Per-frame displacement that counts as a pose change, meters.
    pub min_displacement: f64,
    /// Per-frame rotation that counts as a pose change, degrees.
    pub min_rotation_deg: f64,
    /// Length given to clustered segments that would otherwise be empty.
    pub min_segment_span: f64,
    /// Fail on an action left open at end of stream instead of dropping it.
    pub strict_truncation: bool,
    pub default_significance: f64,
    pub capture_epoch: String,
    pub relations: RelationThresholds,
}

impl Default for LoggerConfig {
    fn default() -> Self {
        LoggerConfig {
            gap_seconds: 5.0,
            min_displacement: 0.10,
            min_rotation_deg: 15.0,
            min_segment_span: 0.1,
            strict_truncation: false,
            default_significance: 0.5,
            capture_epoch: Header::default().capture_epoch,
            relations: RelationThresholds::default(),
        }
    }
}

/// Ingest result with the non-fatal diagnostics collected on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub document: MaredDocument,
    pub warnings: Vec<String>,
}

/// An action with both phases observed (or a truncated one, `end` = last frame).
#[derive(Debug, Clone)]
pub(crate) struct MatchedAction {
    pub actor: String,
    pub verb: Verb,
    pub target: Option<String>,
    pub begin: usize,
    pub end: usize,
    pub payload: Option<String>,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct EntitySample {
    pub pose: Pose,
    pub bbox: Vec3,
    pub hand: Option<Vec3>,
    pub properties: PropertyMap,
}

/// Raw capture with carry-forward applied and interaction flags resolved per frame.
#[derive(Debug)]
pub(crate) struct ResolvedCapture {
    pub times: Vec<Timestamp>,
    pub entities: Vec<Entity>,
    pub kinds: HashMap<String, EntityKind>,
    /// `samples[frame][entity]`
    pub samples: Vec<BTreeMap<String, EntitySample>>,
    pub relations: Vec<RelationSet>,
    pub actions: Vec<MatchedAction>,
    pub markers: Vec<TimedMarker>,
    pub anchors: Vec<SpaceAnchor>,
}

impl ResolvedCapture {
    pub fn resolve(raw: &RawCapture, config: &LoggerConfig, warnings: &mut Vec<String>) -> Result<Self, LoggerError> {
        check_frames(raw)?;
        let actors: HashSet<&str> =
            raw.frames.iter().flat_map(|f| f.actions.iter().map(|a| a.actor.as_str())).collect();

        let mut entities: Vec<Entity> = Vec::new();
        let mut kinds = HashMap::new();
        let mut anchors: Vec<SpaceAnchor> = Vec::new();
        let mut samples: Vec<BTreeMap<String, EntitySample>> = Vec::with_capacity(raw.frames.len());
        let mut current: BTreeMap<String, EntitySample> = BTreeMap::new();
        for frame in &raw.frames {
            for e in &frame.entities {
                if !kinds.contains_key(&e.id) {
                    let kind = if actors.contains(e.id.as_str()) {
                        EntityKind::User
                    } else {
                        e.kind.unwrap_or(EntityKind::Object)
                    };
                    kinds.insert(e.id.clone(), kind);
                    entities.push(Entity {
                        id: e.id.clone(),
                        kind,
                        label: e.label.clone().unwrap_or_else(|| e.id.clone()),
                        significance: e.significance.unwrap_or(config.default_significance),
                        bbox: e.bbox,
                        pose: e.pose,
                        properties: e.properties.clone(),
                    });
                }
                current.insert(
                    e.id.clone(),
                    EntitySample { pose: e.pose, bbox: e.bbox, hand: e.hand, properties: e.properties.clone() },
                );
            }
            for a in &frame.anchors {
                if !anchors.iter().any(|x| x.id == a.id) {
                    anchors.push(a.clone());
                }
            }
            samples.push(current.clone());
        }

        let times: Vec<Timestamp> = raw.frames.iter().map(|f| f.t).collect();
        let actions = match_actions(raw, &kinds, config, warnings)?;
        let markers = collect_markers(raw, &kinds)?;

        let mut relations = Vec::with_capacity(raw.frames.len());
        let mut attachments: BTreeSet<(String, String)> = BTreeSet::new();
        for (i, frame) in raw.frames.iter().enumerate() {
            if let Some(list) = &frame.attachments {
                attachments = list.iter().map(|[a, b]| (a.clone(), b.clone())).collect();
            }
            let grasps: BTreeSet<(String, String)> = actions
                .iter()
                .filter(|a| a.verb == Verb::Grasp && a.begin <= i && i <= a.end)
                .filter_map(|a| a.target.clone().map(|t| (a.actor.clone(), t)))
                .collect();
            let states: Vec<EntityState> = samples[i]
                .iter()
                .map(|(id, s)| EntityState { id, kind: kinds[id], pose: s.pose, bbox: s.bbox, hand: s.hand })
                .collect();
            let ctx = RelateContext { grasps: &grasps, attachments: &attachments, thresholds: &config.relations };
            relations.push(relate_scene(&states, &ctx)?);
        }

        Ok(ResolvedCapture { times, entities, kinds, samples, relations, actions, markers, anchors })
    }

    fn snapshot(&self, frame: usize, target: Option<&str>) -> StateSnapshot {
        let Some(target) = target else {
            return StateSnapshot::default();
        };
        StateSnapshot {
            relations: self.relations[frame].iter().filter(|r| r.involves(target)).cloned().collect(),
            properties: self.samples[frame].get(target).map(|s| s.properties.clone()).unwrap_or_default(),
        }
    }

    /// Interaction events in begin order, ids `ie-N`, segment ids unassigned.
    pub fn interaction_events(&self) -> Vec<InteractionEvent> {
        let mut order: Vec<&MatchedAction> = self.actions.iter().filter(|a| !a.truncated).collect();
        order.sort_by_key(|a| a.begin);
        order
            .into_iter()
            .enumerate()
            .map(|(n, a)| InteractionEvent {
                id: format!("ie-{}", n + 1),
                segment_id: String::new(),
                actor: a.actor.clone(),
                verb: a.verb,
                target: a.target.clone(),
                t_start: self.times[a.begin],
                t_end: self.times[a.end],
                pre_state: self.snapshot(a.begin, a.target.as_deref()),
                post_state: self.snapshot(a.end, a.target.as_deref()),
                payload: a.payload.clone(),
            })
            .collect()
    }
}

fn check_frames(raw: &RawCapture) -> Result<(), LoggerError> {
    if raw.frames.is_empty() {
        return Err(LoggerError::RejectedInput("capture has no frames".into()));
    }
    let mut last: Option<Timestamp> = None;
    for frame in &raw.frames {
        if !frame.t.is_valid() {
            return Err(LoggerError::RejectedInput(format!("invalid frame time {}", frame.t.0)));
        }
        if last.is_some_and(|l| frame.t <= l) {
            return Err(LoggerError::RejectedInput(format!(
                "non-monotone timestamps: {} follows {}",
                frame.t.0,
                last.unwrap().0
            )));
        }
        last = Some(frame.t);
        let mut seen = HashSet::new();
        for e in &frame.entities {
            if !seen.insert(e.id.as_str()) {
                return Err(LoggerError::RejectedInput(format!(
                    "entity `{}` appears twice in frame at {}",
                    e.id, frame.t.0
                )));
            }
            let finite = e.pose.is_finite()
                && e.bbox.iter().all(|v| v.is_finite() && *v > 0.0)
                && e.hand.is_none_or(|h| h.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(LoggerError::RejectedInput(format!(
                    "entity `{}` has a non-finite pose or bad extents at {}",
                    e.id, frame.t.0
                )));
            }
            if !e.pose.is_unit() {
                return Err(LoggerError::RejectedInput(format!(
                    "entity `{}` has a non-unit orientation at {}",
                    e.id, frame.t.0
                )));
            }
            if e.significance.is_some_and(|s| !(0.0..=1.0).contains(&s)) {
                return Err(LoggerError::RejectedInput(format!("entity `{}` significance outside [0, 1]", e.id)));
            }
        }
    }
    Ok(())
}

type ActionKey = (String, Verb, Option<String>);

fn match_actions(
    raw: &RawCapture,
    kinds: &HashMap<String, EntityKind>,
    config: &LoggerConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<MatchedAction>, LoggerError> {
    let mut open: BTreeMap<ActionKey, MatchedAction> = BTreeMap::new();
    let mut done = Vec::new();
    let last = raw.frames.len() - 1;
    for (i, frame) in raw.frames.iter().enumerate() {
        for a in &frame.actions {
            if !kinds.contains_key(&a.actor) {
                return Err(LoggerError::RejectedInput(format!("unknown actor `{}`", a.actor)));
            }
            if let Some(t) = &a.target {
                if !kinds.contains_key(t) {
                    return Err(LoggerError::RejectedInput(format!("unknown target `{t}`")));
                }
            }
            let verb = Verb::parse(&a.verb).unwrap_or_else(|| {
                warnings.push(format!("unknown verb `{}` at {} mapped to gesture", a.verb, frame.t.0));
                Verb::Gesture
            });
            let key = (a.actor.clone(), verb, a.target.clone());
            match a.phase {
                Phase::Begin => {
                    if open.contains_key(&key) {
                        return Err(LoggerError::RejectedInput(format!(
                            "{} {} begun twice without an end at {}",
                            a.actor, verb, frame.t.0
                        )));
                    }
                    open.insert(
                        key,
                        MatchedAction {
                            actor: a.actor.clone(),
                            verb,
                            target: a.target.clone(),
                            begin: i,
                            end: i,
                            payload: a.payload.clone(),
                            truncated: false,
                        },
                    );
                }
                Phase::Update => match open.get_mut(&key) {
                    Some(m) => {
                        if a.payload.is_some() {
                            m.payload = a.payload.clone();
                        }
                    }
                    None => warnings
                        .push(format!("update for {} {} at {} has no open begin; ignored", a.actor, verb, frame.t.0)),
                },
                Phase::End => {
                    let Some(mut m) = open.remove(&key) else {
                        return Err(LoggerError::RejectedInput(format!(
                            "end for {} {} at {} without a begin",
                            a.actor, verb, frame.t.0
                        )));
                    };
                    m.end = i;
                    if a.payload.is_some() {
                        m.payload = a.payload.clone();
                    }
                    done.push(m);
                }
            }
        }
    }
    for (_, mut m) in open {
        if config.strict_truncation {
            return Err(LoggerError::TruncatedAction {
                actor: m.actor,
                verb: m.verb,
                target: m.target.unwrap_or_default(),
                t_start: raw.frames[m.begin].t.0,
            });
        }
        warnings.push(format!(
            "dropping {} {} begun at {}: no end before stream end",
            m.actor, m.verb, raw.frames[m.begin].t.0
        ));
        m.end = last;
        m.truncated = true;
        done.push(m);
    }
    Ok(done)
}

fn collect_markers(raw: &RawCapture, kinds: &HashMap<String, EntityKind>) -> Result<Vec<TimedMarker>, LoggerError> {
    let mut out = Vec::new();
    for frame in &raw.frames {
        for m in &frame.markers {
            for id in m.participants.iter().chain(m.key_objects.iter()) {
                if !kinds.contains_key(id) {
                    return Err(LoggerError::MalformedMarkers(format!(
                        "marker `{}` references unknown entity `{id}`",
                        m.label
                    )));
                }
            }
            out.push(TimedMarker { t: frame.t, marker: m.clone() });
        }
    }
    Ok(out)
}

/// Transforms a raw capture into a validated semantic document.
pub fn ingest(raw: &RawCapture, config: &LoggerConfig) -> Result<MaredDocument, LoggerError> {
    ingest_with_report(raw, config).map(|r| r.document)
}

pub fn ingest_with_report(raw: &RawCapture, config: &LoggerConfig) -> Result<IngestReport, LoggerError> {
    let mut warnings = Vec::new();
    let capture = ResolvedCapture::resolve(raw, config, &mut warnings)?;
    let mut interactions = capture.interaction_events();
    let mut state_changes = changes::detect(&capture, &interactions, config, &mut warnings);

    let spans: Vec<EventSpan> = interactions
        .iter()
        .map(|e| EventSpan::from_interaction(e, &capture.kinds))
        .chain(state_changes.iter().map(|s| EventSpan::bare(s.t_start, s.t_end)))
        .collect();
    let extent = CaptureExtent {
        start: capture.times[0],
        end: *capture.times.last().unwrap(),
        has_entities: !capture.entities.is_empty(),
        users: capture.entities.iter().filter(|e| e.kind == EntityKind::User).map(|e| e.id.clone()).collect(),
    };
    let segments = build_segments(&spans, &capture.markers, &extent, config)?;

    interactions.retain_mut(|e| match segments.iter().find(|s| s.contains_span(e.t_start, e.t_end)) {
        Some(seg) => {
            e.segment_id = seg.id.clone();
            true
        }
        None => {
            warnings.push(format!("dropping {} ({}): outside every segment", e.id, e.verb));
            false
        }
    });
    state_changes.retain(|s| {
        let inside = segments.iter().any(|seg| seg.contains_span(s.t_start, s.t_end));
        if !inside {
            warnings.push(format!("dropping {}: outside every segment", s.id));
        }
        inside
    });
    let kept: HashSet<&str> = interactions.iter().map(|e| e.id.as_str()).collect();
    for s in &mut state_changes {
        if s.cause_event_id.as_deref().is_some_and(|c| !kept.contains(c)) {
            s.cause_event_id = None;
        }
    }

    let document = MaredDocument {
        mared_version: MARED_VERSION.to_owned(),
        header: Header { capture_epoch: config.capture_epoch.clone(), anchors: capture.anchors.clone() },
        entities: capture.entities.clone(),
        segments,
        interaction_events: interactions,
        state_change_events: state_changes,
        extensions: BTreeMap::new(),
    };
    let violations = validate_document(&document);
    if !violations.is_empty() {
        return Err(LoggerError::InvalidOutput(violations));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(IngestReport { document, warnings })
}

/// Pose-change, relation-change and intrinsic-change events of `raw`.
/// Interaction `events` are only consulted to attribute causes.
pub(crate) fn state_changes_of(
    raw: &RawCapture,
    events: &[InteractionEvent],
    config: &LoggerConfig,
) -> Result<Vec<StateChangeEvent>, LoggerError> {
    let mut warnings = Vec::new();
    let capture = ResolvedCapture::resolve(raw, config, &mut warnings)?;
    Ok(changes::detect(&capture, events, config, &mut warnings))
}
