// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Geometric evaluation of semantic relations between entities.
//!
//! The vertical axis is +z. Bounding boxes are full axis-aligned extents
//! centred on the entity position.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntityKind, Pose, Predicate, RelationSet, SemanticRelation, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelateError {
    #[error("rejected input: non-finite pose or extents for entity `{0}`")]
    NonFinite(String),
}

/// Distances in meters; `on_min_overlap` is a fraction of the subject footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RelationThresholds {
    pub on_gap_below: f64,
    pub on_gap_above: f64,
    pub on_min_overlap: f64,
    pub near: f64,
    pub hold: f64,
}

impl Default for RelationThresholds {
    fn default() -> Self {
        RelationThresholds { on_gap_below: 0.01, on_gap_above: 0.02, on_min_overlap: 0.5, near: 0.5, hold: 0.05 }
    }
}

/// Geometric state of one entity at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityState<'a> {
    pub id: &'a str,
    pub kind: EntityKind,
    pub pose: Pose,
    pub bbox: Vec3,
    /// Hand point for users; falls back to the pose position.
    pub hand: Option<Vec3>,
}

impl EntityState<'_> {
    fn check(&self) -> Result<(), RelateError> {
        let hand_ok = self.hand.is_none_or(|h| h.iter().all(|v| v.is_finite()));
        if self.pose.is_finite() && self.bbox.iter().all(|v| v.is_finite()) && hand_ok {
            Ok(())
        } else {
            Err(RelateError::NonFinite(self.id.to_owned()))
        }
    }

    fn centre(&self) -> Vec3 {
        self.pose.position
    }

    fn hand_point(&self) -> Vec3 {
        self.hand.unwrap_or(self.pose.position)
    }

    fn bottom(&self) -> f64 {
        self.pose.position[2] - self.bbox[2] / 2.0
    }

    fn top(&self) -> f64 {
        self.pose.position[2] + self.bbox[2] / 2.0
    }

    fn volume(&self) -> f64 {
        self.bbox.iter().product()
    }
}

/// Interaction state the geometry cannot see.
#[derive(Debug, Clone, Copy)]
pub struct RelateContext<'a> {
    /// Active grasps as `(holder, held)` pairs.
    pub grasps: &'a BTreeSet<(String, String)>,
    /// Annotated attachments as `(part, base)` pairs.
    pub attachments: &'a BTreeSet<(String, String)>,
    pub thresholds: &'a RelationThresholds,
}

fn distance(a: Vec3, b: Vec3) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn interval_overlap(ca: f64, ea: f64, cb: f64, eb: f64) -> f64 {
    let lo = (ca - ea / 2.0).max(cb - eb / 2.0);
    let hi = (ca + ea / 2.0).min(cb + eb / 2.0);
    (hi - lo).max(0.0)
}

fn is_on(a: &EntityState, b: &EntityState, th: &RelationThresholds) -> bool {
    // centroid ordering keeps on(a,b) and on(b,a) exclusive for thin slabs
    if a.pose.position[2] <= b.pose.position[2] {
        return false;
    }
    let gap = a.bottom() - b.top();
    if gap < -th.on_gap_below || gap > th.on_gap_above {
        return false;
    }
    let footprint = a.bbox[0] * a.bbox[1];
    let overlap = interval_overlap(a.pose.position[0], a.bbox[0], b.pose.position[0], b.bbox[0])
        * interval_overlap(a.pose.position[1], a.bbox[1], b.pose.position[1], b.bbox[1]);
    footprint > 0.0 && overlap >= th.on_min_overlap * footprint
}

fn is_in(a: &EntityState, b: &EntityState) -> bool {
    let c = a.centre();
    let inside = (0..3).all(|i| (c[i] - b.pose.position[i]).abs() <= b.bbox[i] / 2.0);
    inside && a.volume() < b.volume()
}

fn is_held_by(a: &EntityState, u: &EntityState, ctx: &RelateContext) -> bool {
    a.kind == EntityKind::Object
        && u.kind == EntityKind::User
        && ctx.grasps.contains(&(u.id.to_owned(), a.id.to_owned()))
        && distance(u.hand_point(), a.centre()) < ctx.thresholds.hold
}

fn contact(a: &EntityState, b: &EntityState, ctx: &RelateContext, out: &mut RelationSet) {
    if is_on(a, b, ctx.thresholds) {
        out.insert(SemanticRelation::new(Predicate::On, a.id, b.id));
    }
    if is_in(a, b) {
        out.insert(SemanticRelation::new(Predicate::In, a.id, b.id));
    }
    if is_held_by(a, b, ctx) {
        out.insert(SemanticRelation::new(Predicate::HeldBy, a.id, b.id));
    }
}

/// Every relation with `subject` as subject and `object` as object.
///
/// `near` is suppressed whenever a contact relation (`on`, `in`, `heldBy`)
/// links the pair in either direction.
pub fn relate(subject: &EntityState, object: &EntityState, ctx: &RelateContext) -> Result<RelationSet, RelateError> {
    subject.check()?;
    object.check()?;
    let mut out = RelationSet::new();
    if subject.id == object.id {
        return Ok(out);
    }
    contact(subject, object, ctx, &mut out);
    if ctx.attachments.contains(&(subject.id.to_owned(), object.id.to_owned())) {
        out.insert(SemanticRelation::new(Predicate::AttachedTo, subject.id, object.id));
    }
    let mut reverse = RelationSet::new();
    contact(object, subject, ctx, &mut reverse);
    let touching = !out.is_empty() && out.iter().any(|r| r.predicate != Predicate::AttachedTo);
    if !touching && reverse.is_empty() && distance(subject.centre(), object.centre()) < ctx.thresholds.near {
        out.insert(SemanticRelation::new(Predicate::Near, subject.id, object.id));
    }
    Ok(out)
}

/// All relations among `states`. The symmetric `near` predicate is reported
/// once per pair, with the lexicographically smaller id as subject.
pub fn relate_scene(states: &[EntityState], ctx: &RelateContext) -> Result<RelationSet, RelateError> {
    let mut out = RelationSet::new();
    for a in states {
        for b in states {
            if a.id == b.id {
                continue;
            }
            for r in relate(a, b, ctx)? {
                if r.predicate == Predicate::Near && a.id > b.id {
                    continue;
                }
                out.insert(r);
            }
        }
    }
    Ok(out)
}
