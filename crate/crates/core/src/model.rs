// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Domain types shared by every pipeline stage.
//!
//! All values are plain data: immutable once built, `Send + Sync`, and
//! serialized with camelCase keys by the [`codec`](crate::codec) module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Document format version written by this crate.
pub const MARED_VERSION: &str = "0.1";

/// Versions accepted by the decoder.
pub const SUPPORTED_VERSIONS: &[&str] = &[MARED_VERSION];

/// Seconds since the capture epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0.0);

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        self.0.is_finite() && self.0 >= 0.0
    }
}

impl From<f64> for Timestamp {
    fn from(t: f64) -> Self {
        Timestamp(t)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

pub type Vec3 = [f64; 3];

/// Position in meters plus a unit quaternion stored as `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: [f64; 4],
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: [0.0, 0.0, 0.0], orientation: [1.0, 0.0, 0.0, 0.0] };

    pub fn at(position: Vec3) -> Self {
        Pose { position, ..Pose::IDENTITY }
    }

    pub fn new(position: Vec3, rotation: UnitQuaternion<f64>) -> Self {
        let q = rotation.quaternion();
        Pose { position, orientation: [q.w, q.i, q.j, q.k] }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.orientation.iter()).all(|v| v.is_finite())
    }

    /// Quaternion norm within 1e-6 of one.
    pub fn is_unit(&self) -> bool {
        let n = self.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        (n - 1.0).abs() <= 1e-6
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.orientation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.translation() - other.translation()).norm()
    }

    /// Rotation angle in radians separating the two orientations.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.rotation().angle_to(&other.rotation())
    }

    /// Linear position blend with spherical orientation blend; `s` in `[0, 1]`.
    pub fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        let a = self.translation();
        let b = other.translation();
        let p = a + (b - a) * s;
        let q = self.rotation().try_slerp(&other.rotation(), s, 1e-12).unwrap_or_else(|| self.rotation());
        Pose::new([p.x, p.y, p.z], q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EntityKind {
    User,
    Object,
}

/// Intrinsic property value: boolean, number or text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropertyValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl From<bool> for PropertyValue {
    fn from(v: bool) -> Self {
        PropertyValue::Bool(v)
    }
}

impl From<f64> for PropertyValue {
    fn from(v: f64) -> Self {
        PropertyValue::Number(v)
    }
}

impl From<&str> for PropertyValue {
    fn from(v: &str) -> Self {
        PropertyValue::Text(v.to_owned())
    }
}

impl PropertyValue {
    pub fn is_finite(&self) -> bool {
        match self {
            PropertyValue::Number(v) => v.is_finite(),
            _ => true,
        }
    }
}

pub type PropertyMap = BTreeMap<String, PropertyValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub label: String,
    /// Object-importance prior in `[0, 1]`.
    pub significance: f64,
    /// Full axis-aligned extents, meters.
    pub bbox: Vec3,
    /// Pose at the start of the capture; later poses come from pose-kind state changes.
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: PropertyMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Predicate {
    On,
    In,
    HeldBy,
    Near,
    AttachedTo,
}

impl Predicate {
    pub fn name(self) -> &'static str {
        match self {
            Predicate::On => "on",
            Predicate::In => "in",
            Predicate::HeldBy => "heldBy",
            Predicate::Near => "near",
            Predicate::AttachedTo => "attachedTo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SemanticRelation {
    pub predicate: Predicate,
    pub subject: String,
    pub object: String,
}

impl SemanticRelation {
    pub fn new(predicate: Predicate, subject: impl Into<String>, object: impl Into<String>) -> Self {
        SemanticRelation { predicate, subject: subject.into(), object: object.into() }
    }

    pub fn involves(&self, id: &str) -> bool {
        self.subject == id || self.object == id
    }
}

impl fmt::Display for SemanticRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.predicate.name(), self.subject, self.object)
    }
}

pub type RelationSet = BTreeSet<SemanticRelation>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SemanticExperienceSegment {
    pub id: String,
    /// Primary purpose or task, e.g. "drone lifting method".
    pub label: String,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub participants: Vec<String>,
    pub key_objects: Vec<String>,
}

impl SemanticExperienceSegment {
    pub fn contains_span(&self, start: Timestamp, end: Timestamp) -> bool {
        self.t_start <= start && end <= self.t_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Verb {
    Grasp,
    Release,
    Press,
    Activate,
    Give,
    Place,
    Speak,
    Gesture,
    Gaze,
}

impl Verb {
    pub const ALL: [Verb; 9] = [
        Verb::Grasp,
        Verb::Release,
        Verb::Press,
        Verb::Activate,
        Verb::Give,
        Verb::Place,
        Verb::Speak,
        Verb::Gesture,
        Verb::Gaze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Grasp => "grasp",
            Verb::Release => "release",
            Verb::Press => "press",
            Verb::Activate => "activate",
            Verb::Give => "give",
            Verb::Place => "place",
            Verb::Speak => "speak",
            Verb::Gesture => "gesture",
            Verb::Gaze => "gaze",
        }
    }

    pub fn parse(s: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relations touching the interaction target plus its intrinsic properties.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StateSnapshot {
    pub relations: RelationSet,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: PropertyMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InteractionEvent {
    pub id: String,
    pub segment_id: String,
    pub actor: String,
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub pre_state: StateSnapshot,
    pub post_state: StateSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl InteractionEvent {
    pub fn covers(&self, t: Timestamp) -> bool {
        self.t_start <= t && t <= self.t_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StateChangeKind {
    Pose,
    Relation,
    Intrinsic,
}

/// Before/after values; the variant is the state-change kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum StateChange {
    Pose { before: Pose, after: Pose },
    Relation { before: RelationSet, after: RelationSet },
    Intrinsic { before: PropertyMap, after: PropertyMap },
}

impl StateChange {
    pub fn kind(&self) -> StateChangeKind {
        match self {
            StateChange::Pose { .. } => StateChangeKind::Pose,
            StateChange::Relation { .. } => StateChangeKind::Relation,
            StateChange::Intrinsic { .. } => StateChangeKind::Intrinsic,
        }
    }

    pub fn is_noop(&self) -> bool {
        match self {
            StateChange::Pose { before, after } => before == after,
            StateChange::Relation { before, after } => before == after,
            StateChange::Intrinsic { before, after } => before == after,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrajectorySample {
    pub t: Timestamp,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateChangeEvent {
    pub id: String,
    pub subject: String,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    #[serde(flatten)]
    pub change: StateChange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectorySample>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_event_id: Option<String>,
}

impl StateChangeEvent {
    pub fn kind(&self) -> StateChangeKind {
        self.change.kind()
    }

    pub fn covers(&self, t: Timestamp) -> bool {
        self.t_start <= t && t <= self.t_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SpaceAnchor {
    pub id: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Header {
    pub capture_epoch: String,
    #[serde(default)]
    pub anchors: Vec<SpaceAnchor>,
}

impl Default for Header {
    fn default() -> Self {
        Header { capture_epoch: "1970-01-01T00:00:00Z".to_owned(), anchors: Vec::new() }
    }
}

/// The structured semantic log produced by ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MaredDocument {
    pub mared_version: String,
    pub header: Header,
    pub entities: Vec<Entity>,
    pub segments: Vec<SemanticExperienceSegment>,
    pub interaction_events: Vec<InteractionEvent>,
    pub state_change_events: Vec<StateChangeEvent>,
    /// Unrecognized top-level keys kept by a lenient decode.
    #[serde(skip)]
    pub extensions: BTreeMap<String, serde_json::Value>,
}

impl Default for MaredDocument {
    fn default() -> Self {
        MaredDocument {
            mared_version: MARED_VERSION.to_owned(),
            header: Header::default(),
            entities: Vec::new(),
            segments: Vec::new(),
            interaction_events: Vec::new(),
            state_change_events: Vec::new(),
            extensions: BTreeMap::new(),
        }
    }
}

impl MaredDocument {
    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn segment(&self, id: &str) -> Option<&SemanticExperienceSegment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn interaction(&self, id: &str) -> Option<&InteractionEvent> {
        self.interaction_events.iter().find(|e| e.id == id)
    }

    pub fn state_change(&self, id: &str) -> Option<&StateChangeEvent> {
        self.state_change_events.iter().find(|e| e.id == id)
    }

    /// Segment whose span contains `t`; the later one wins on a shared boundary.
    pub fn segment_at(&self, t: Timestamp) -> Option<&SemanticExperienceSegment> {
        self.segments.iter().rev().find(|s| s.t_start <= t && t <= s.t_end)
    }

    /// Capture-space pose of `entity` at `t`, replaying pose-kind state changes
    /// on top of the entity's initial pose.
    pub fn pose_at(&self, entity: &str, t: Timestamp) -> Option<Pose> {
        let mut pose = self.entity(entity)?.pose;
        for sc in self.state_change_events.iter().filter(|s| s.subject == entity) {
            let StateChange::Pose { before, after } = &sc.change else {
                continue;
            };
            if t < sc.t_start {
                break;
            }
            if t >= sc.t_end {
                pose = *after;
                continue;
            }
            pose = interpolate_track(sc, before, after, t);
            break;
        }
        Some(pose)
    }
}

pub(crate) fn interpolate_track(sc: &StateChangeEvent, before: &Pose, after: &Pose, t: Timestamp) -> Pose {
    let mut samples: Vec<TrajectorySample> = Vec::new();
    samples.push(TrajectorySample { t: sc.t_start, pose: *before });
    if let Some(track) = &sc.trajectory {
        samples.extend(track.iter().filter(|s| s.t > sc.t_start && s.t < sc.t_end));
    }
    samples.push(TrajectorySample { t: sc.t_end, pose: *after });
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if t >= a.t && t <= b.t {
            let span = b.t.0 - a.t.0;
            let s = if span > 0.0 { (t.0 - a.t.0) / span } else { 1.0 };
            return a.pose.interpolate(&b.pose, s);
        }
    }
    *after
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EntityPose {
    pub entity: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Keyframe {
    pub t: Timestamp,
    pub score: f64,
    pub sources: Vec<String>,
    pub anchors: Vec<EntityPose>,
}

/// A document plus the keyframes that survived the decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframedDocument {
    pub document: MaredDocument,
    pub threshold: f64,
    pub keyframes: Vec<Keyframe>,
}

impl KeyframedDocument {
    pub fn keyframe_times(&self) -> Vec<f64> {
        self.keyframes.iter().map(|k| k.t.0).collect()
    }
}
