// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::model::{KeyframedDocument, Pose, SpaceAnchor, StateChange};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("insufficient anchors: {0}")]
    InsufficientAnchors(String),
}

/// `x ↦ scale · rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        rotation: UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(1.0, 0.0, 0.0, 0.0)),
        translation: Vector3::new(0.0, 0.0, 0.0),
        scale: 1.0,
    };

    pub fn apply_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        let p = self.apply_point(pose.translation());
        Pose::new([p.x, p.y, p.z], self.rotation * pose.rotation())
    }
}

// Relative spread below which anchor sets count as collinear.
const COLLINEAR_RATIO: f64 = 1e-9;

/// Least-squares similarity taking `source[i]` onto `target[i]`. Returns
/// `true` alongside a translation-only fit when fewer than three points
/// are given or they are collinear.
pub fn fit(source: &[Vector3<f64>], target: &[Vector3<f64>], allow_scale: bool) -> (Similarity, bool) {
    assert_eq!(source.len(), target.len());
    assert!(!source.is_empty());
    let n = source.len() as f64;
    let cs = source.iter().sum::<Vector3<f64>>() / n;
    let ct = target.iter().sum::<Vector3<f64>>() / n;

    let translation_only = Similarity { translation: ct - cs, ..Similarity::IDENTITY };
    if source.len() < 3 {
        return (translation_only, true);
    }

    let mut spread = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    let mut var = 0.0;
    for (s, t) in source.iter().zip(target) {
        let a = s - cs;
        let b = t - ct;
        spread += a * a.transpose();
        cross += b * a.transpose();
        var += a.norm_squared();
    }
    let ev = spread.symmetric_eigenvalues();
    let (hi, mid) = {
        let mut e = [ev[0], ev[1], ev[2]];
        e.sort_by(|x, y| y.total_cmp(x));
        (e[0], e[1])
    };
    if hi <= 0.0 || mid <= COLLINEAR_RATIO * hi {
        return (translation_only, true);
    }

    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = u * fix * v_t;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let scale = if allow_scale {
        let s = svd.singular_values;
        (s[0] + s[1] + d * s[2]) / var
    } else {
        1.0
    };
    let translation = ct - rotation * cs * scale;
    (Similarity { rotation, translation, scale }, false)
}

/// Result of re-anchoring a document into another space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAdaptation {
    pub document: KeyframedDocument,
    pub transform: Similarity,
    /// Translation-only fallback was used.
    pub degraded: bool,
    /// Largest distance between a transformed capture anchor and its target.
    pub residual: f64,
    pub matched: Vec<String>,
}

/// Fits the capture anchors to same-named `target` anchors and moves every
/// pose in the document accordingly.
pub fn adapt_spatial(
    kdoc: &KeyframedDocument,
    target: &[SpaceAnchor],
    allow_scale: bool,
) -> Result<SpatialAdaptation, SpatialError> {
    let mut matched = Vec::new();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for a in &kdoc.document.header.anchors {
        if let Some(t) = target.iter().find(|t| t.id == a.id) {
            matched.push(a.id.clone());
            src.push(a.pose.translation());
            dst.push(t.pose.translation());
        }
    }
    if matched.is_empty() {
        return Err(SpatialError::InsufficientAnchors("no anchor ids shared with the target space".into()));
    }
    let (transform, degraded) = fit(&src, &dst, allow_scale);
    if degraded {
        log::warn!("spatial adaptation degraded to translation only ({} usable anchors)", matched.len());
    }
    let residual = src.iter().zip(&dst).map(|(s, d)| (transform.apply_point(*s) - d).norm()).fold(0.0, f64::max);
    Ok(SpatialAdaptation { document: transform_document(kdoc, &transform), transform, degraded, residual, matched })
}

pub fn transform_document(kdoc: &KeyframedDocument, tf: &Similarity) -> KeyframedDocument {
    let mut out = kdoc.clone();
    let doc = &mut out.document;
    for a in &mut doc.header.anchors {
        a.pose = tf.apply_pose(&a.pose);
    }
    for e in &mut doc.entities {
        e.pose = tf.apply_pose(&e.pose);
        for x in &mut e.bbox {
            *x *= tf.scale;
        }
    }
    for s in &mut doc.state_change_events {
        if let StateChange::Pose { before, after } = &mut s.change {
            *before = tf.apply_pose(before);
            *after = tf.apply_pose(after);
        }
        for sample in s.trajectory.iter_mut().flatten() {
            sample.pose = tf.apply_pose(&sample.pose);
        }
    }
    for k in &mut out.keyframes {
        for a in &mut k.anchors {
            a.pose = tf.apply_pose(&a.pose);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 3]]) -> Vec<Vector3<f64>> {
        v.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect()
    }

    #[test]
    fn identity_on_identical_sets() {
        let a = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let (tf, degraded) = fit(&a, &a, false);
        assert!(!degraded);
        assert!(tf.rotation.angle() < 1e-12);
        assert!(tf.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_scale_when_allowed() {
        let a = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let b: Vec<_> = a.iter().map(|p| p * 2.0 + Vector3::new(1.0, 2.0, 3.0)).collect();
        let (tf, _) = fit(&a, &b, true);
        assert!((tf.scale - 2.0).abs() < 1e-9);
        for (p, q) in a.iter().zip(&b) {
            assert!((tf.apply_point(*p) - q).norm() < 1e-9);
        }
    }

    #[test]
    fn collinear_and_sparse_sets_degrade() {
        let line = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let moved: Vec<_> = line.iter().map(|p| p + Vector3::new(0.0, 1.0, 0.0)).collect();
        let (tf, degraded) = fit(&line, &moved, false);
        assert!(degraded);
        assert!((tf.translation - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!(fit(&line[..2], &moved[..2], false).1);
    }

    #[test]
    fn reflection_is_never_returned() {
        let a = pts(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]);
        let mirrored: Vec<_> = a.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let (tf, _) = fit(&a, &mirrored, false);
        assert!((tf.rotation.to_rotation_matrix().matrix().determinant() - 1.0).abs() < 1e-9);
    }
}
