// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Reference captures used by tests, benches and the `sample` command.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::logger::{
    ingest, ActionAnnotation, LoggerConfig, MarkerKind, Phase, RawCapture, RawEntity, RawFrame, SegmentMarker,
};
use crate::model::{EntityKind, MaredDocument, Pose, PropertyMap, PropertyValue, SpaceAnchor, Vec3};

fn raw_entity(id: &str, pos: Vec3, bbox: Vec3) -> RawEntity {
    RawEntity {
        id: id.into(),
        pose: Pose::at(pos),
        bbox,
        properties: PropertyMap::new(),
        kind: None,
        label: None,
        significance: None,
        hand: None,
    }
}

fn action(actor: &str, verb: &str, target: Option<&str>, phase: Phase) -> ActionAnnotation {
    ActionAnnotation { actor: actor.into(), verb: verb.into(), target: target.map(Into::into), phase, payload: None }
}

fn spoken(actor: &str, phase: Phase, text: &str) -> ActionAnnotation {
    let mut a = action(actor, "speak", None, phase);
    a.payload = Some(text.into());
    a
}

fn marker(kind: MarkerKind, label: &str, participants: &[&str], key_objects: &[&str]) -> SegmentMarker {
    SegmentMarker {
        kind,
        label: label.into(),
        participants: participants.iter().map(|s| s.to_string()).collect(),
        key_objects: key_objects.iter().map(|s| s.to_string()).collect(),
    }
}

/// An expert explaining and assembling a drone over 20 s at 1 Hz.
///
/// Two marked segments, "drone principles" on `[0, 10]` and "drone
/// assembly" on `[10, 20]`. The expert holds the drone from 5 to 15 and
/// lifts it between 10 and 14; the battery starts charging at 17.
pub fn drone_capture() -> RawCapture {
    let frames = (0..=20)
        .map(|i| {
            let t = i as f64;
            let mut f = RawFrame::at(t);
            let lifted = (10..=14).contains(&i);
            let drone_pos = [0.0, 0.0, if lifted { 1.35 } else { 1.05 }];

            let mut expert = raw_entity("expert", [1.0, 0.0, 0.9], [0.5, 0.5, 1.8]);
            expert.kind = Some(EntityKind::User);
            expert.hand = Some(if (5..=15).contains(&i) { drone_pos } else { [0.6, 0.0, 1.0] });
            let mut drone = raw_entity("drone", drone_pos, [0.3, 0.3, 0.1]);
            drone.significance = Some(1.0);
            let mut table = raw_entity("table", [0.0, 0.0, 0.5], [1.2, 0.8, 1.0]);
            table.significance = Some(0.2);
            let mut battery = raw_entity("battery", [0.5, 0.3, 1.015], [0.1, 0.05, 0.03]);
            battery.significance = Some(0.4);
            battery.properties.insert("charging".into(), PropertyValue::Bool(i >= 17));
            f.entities = vec![expert, drone, table, battery];

            match i {
                0 => {
                    f.anchors = vec![
                        SpaceAnchor { id: "table-corner-a".into(), pose: Pose::at([0.6, 0.4, 1.0]) },
                        SpaceAnchor { id: "table-corner-b".into(), pose: Pose::at([-0.6, 0.4, 1.0]) },
                        SpaceAnchor { id: "door".into(), pose: Pose::at([3.0, 0.0, 1.0]) },
                        SpaceAnchor { id: "window".into(), pose: Pose::at([0.0, 3.0, 1.5]) },
                    ];
                    f.markers.push(marker(
                        MarkerKind::SegmentStart,
                        "drone principles",
                        &["expert"],
                        &["drone", "table"],
                    ));
                }
                1 => f.actions.push(spoken("expert", Phase::Begin, "these are the four rotors")),
                2 => f.actions.push(action("expert", "gesture", Some("drone"), Phase::Begin)),
                3 => {
                    f.actions.push(action("expert", "speak", None, Phase::End));
                    f.actions.push(action("expert", "gesture", Some("drone"), Phase::End));
                }
                5 => f.actions.push(action("expert", "grasp", Some("drone"), Phase::Begin)),
                10 => {
                    f.actions.push(action("expert", "grasp", Some("drone"), Phase::End));
                    f.actions.push(action("expert", "grasp", Some("drone"), Phase::Begin));
                    f.markers.push(marker(MarkerKind::SegmentEnd, "drone principles", &[], &[]));
                    f.markers.push(marker(
                        MarkerKind::SegmentStart,
                        "drone assembly",
                        &["expert"],
                        &["drone", "battery"],
                    ));
                }
                15 => f.actions.push(action("expert", "grasp", Some("drone"), Phase::End)),
                16 => f.actions.push(action("expert", "press", Some("battery"), Phase::Begin)),
                17 => f.actions.push(action("expert", "press", Some("battery"), Phase::End)),
                18 => f.actions.push(spoken("expert", Phase::Begin, "now you try")),
                19 => f.actions.push(action("expert", "speak", None, Phase::End)),
                20 => f.markers.push(marker(MarkerKind::SegmentEnd, "drone assembly", &[], &[])),
                _ => {}
            }
            f
        })
        .collect();
    RawCapture { frames }
}

/// A user lifting a cup off a table while a lamp switches on by itself.
///
/// The grasp runs from 1.0 to 1.4; the hand reaches the cup at 1.2 as the
/// cup leaves the table. The lamp's `is_on` flips at 3.0.
pub fn cup_capture() -> RawCapture {
    let times = [0.0, 0.5, 1.0, 1.2, 1.4, 2.0, 2.5, 3.0];
    let frames = times
        .iter()
        .map(|&t| {
            let mut f = RawFrame::at(t);
            let cup_z = if t < 1.1 {
                0.8
            } else if t < 1.3 {
                0.9
            } else {
                1.0
            };
            let cup_pos = [0.0, 0.0, cup_z];
            let mut u1 = raw_entity("u1", [0.8, 0.0, 0.9], [0.5, 0.5, 1.8]);
            u1.kind = Some(EntityKind::User);
            u1.hand = Some(if t > 1.1 { cup_pos } else { [0.4, 0.0, 1.0] });
            let mut cup = raw_entity("cup", cup_pos, [0.08, 0.08, 0.1]);
            cup.significance = Some(0.6);
            let mut table = raw_entity("table", [0.0, 0.0, 0.375], [1.2, 0.8, 0.75]);
            table.significance = Some(0.3);
            let mut lamp = raw_entity("lamp", [0.5, 0.3, 0.95], [0.2, 0.2, 0.4]);
            lamp.properties.insert("is_on".into(), PropertyValue::Bool(t >= 3.0));
            f.entities = vec![u1, cup, table, lamp];
            if t == 1.0 {
                f.actions.push(action("u1", "grasp", Some("cup"), Phase::Begin));
            }
            if t == 1.4 {
                f.actions.push(action("u1", "grasp", Some("cup"), Phase::End));
            }
            f
        })
        .collect();
    RawCapture { frames }
}

/// Shape of a generated capture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomCaptureSpec {
    pub frames: usize,
    pub users: usize,
    pub objects: usize,
    /// Emit contiguous labelled segments instead of relying on clustering.
    pub markers: bool,
}

impl Default for RandomCaptureSpec {
    fn default() -> Self {
        RandomCaptureSpec { frames: 40, users: 2, objects: 3, markers: false }
    }
}

const RANDOM_VERBS: [&str; 10] =
    ["grasp", "release", "place", "give", "press", "activate", "gaze", "gesture", "speak", "wave"];

struct OpenAction {
    verb: &'static str,
    target: Option<String>,
    remaining: usize,
}

/// A well-formed capture drawn from `seed`; equal seeds give equal captures.
pub fn random_capture(seed: u64, spec: RandomCaptureSpec) -> RawCapture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users: Vec<String> = (1..=spec.users.max(1)).map(|i| format!("user-{i}")).collect();
    let objects: Vec<String> = (1..=spec.objects).map(|i| format!("obj-{i}")).collect();

    let mut user_pos: Vec<Vec3> =
        users.iter().map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.9]).collect();
    let mut obj_pose: Vec<Pose> = objects
        .iter()
        .map(|_| Pose::at([rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.5..1.5)]))
        .collect();
    let obj_bbox: Vec<Vec3> = objects
        .iter()
        .map(|_| [rng.gen_range(0.05..0.6), rng.gen_range(0.05..0.6), rng.gen_range(0.05..0.6)])
        .collect();
    let obj_sig: Vec<f64> = objects.iter().map(|_| rng.gen_range(0.0..=1.0)).collect();
    let mut obj_on: Vec<bool> = objects.iter().map(|_| rng.gen_bool(0.5)).collect();
    let mut open: Vec<Option<OpenAction>> = users.iter().map(|_| None).collect();

    let n = spec.frames.max(1);
    let boundaries: Vec<usize> = if spec.markers && n >= 2 {
        let mut b = vec![0];
        let mut i = 0;
        while i + 2 < n - 1 {
            i += rng.gen_range(2..=(n / 2).max(2));
            if i < n - 1 {
                b.push(i);
            }
        }
        b.push(n - 1);
        b
    } else {
        Vec::new()
    };

    let mut t = 0.0;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            t += rng.gen_range(0.2..1.5);
        }
        let mut f = RawFrame::at(t);

        for p in &mut obj_pose {
            if rng.gen_bool(0.2) {
                let step = |rng: &mut ChaCha8Rng| rng.gen_range(-0.3..0.3);
                p.position = [
                    p.position[0] + step(&mut rng),
                    p.position[1] + step(&mut rng),
                    p.position[2] + step(&mut rng) / 3.0,
                ];
            }
            if rng.gen_bool(0.05) {
                let yaw: f64 = rng.gen_range(-1.0..1.0);
                *p = Pose::new(p.position, p.rotation() * nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, yaw));
            }
        }
        for p in &mut user_pos {
            if rng.gen_bool(0.1) {
                p[0] += rng.gen_range(-0.4..0.4);
                p[1] += rng.gen_range(-0.4..0.4);
            }
        }
        for on in &mut obj_on {
            if rng.gen_bool(0.05) {
                *on = !*on;
            }
        }

        let last = i + 1 == n;
        for (u, user) in users.iter().enumerate() {
            let mut hand = [user_pos[u][0] - 0.3, user_pos[u][1], 1.0];
            match open[u].as_mut() {
                Some(a) if a.remaining == 0 || last => {
                    let mut end = action(user, a.verb, a.target.as_deref(), Phase::End);
                    if a.verb == "speak" {
                        end.payload = Some(format!("remark {i}"));
                    }
                    f.actions.push(end);
                    open[u] = None;
                }
                Some(a) => {
                    a.remaining -= 1;
                    if let Some(k) = a.target.as_ref().and_then(|t| objects.iter().position(|o| o == t)) {
                        if a.verb == "grasp" {
                            hand = obj_pose[k].position;
                        }
                    }
                }
                None if !last && rng.gen_bool(0.2) => {
                    let verb = *RANDOM_VERBS.choose(&mut rng).unwrap();
                    let target = match rng.gen_range(0..4) {
                        0 => None,
                        1 if users.len() > 1 => Some(users[(u + 1) % users.len()].clone()),
                        _ if !objects.is_empty() => objects.choose(&mut rng).cloned(),
                        _ => None,
                    };
                    let mut begin = action(user, verb, target.as_deref(), Phase::Begin);
                    if verb == "speak" {
                        begin.payload = Some(format!("utterance {i}"));
                    }
                    f.actions.push(begin);
                    open[u] = Some(OpenAction { verb, target, remaining: rng.gen_range(0..4) });
                }
                None => {}
            }
            let mut e = raw_entity(user, user_pos[u], [0.5, 0.5, 1.8]);
            e.kind = Some(EntityKind::User);
            e.hand = Some(hand);
            f.entities.push(e);
        }
        for (k, id) in objects.iter().enumerate() {
            let mut e = raw_entity(id, obj_pose[k].position, obj_bbox[k]);
            e.pose = obj_pose[k];
            e.significance = Some(obj_sig[k]);
            e.properties.insert("is_on".into(), PropertyValue::Bool(obj_on[k]));
            f.entities.push(e);
        }
        if i == 0 {
            f.anchors = (0..4)
                .map(|a| SpaceAnchor {
                    id: format!("anchor-{a}"),
                    pose: Pose::at([rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..2.0)]),
                })
                .collect();
        }
        if objects.len() >= 2 && rng.gen_bool(0.05) {
            f.attachments =
                Some(if rng.gen_bool(0.5) { vec![[objects[0].clone(), objects[1].clone()]] } else { Vec::new() });
        }
        if let Some(pos) = boundaries.iter().position(|&b| b == i) {
            if pos > 0 {
                f.markers.push(marker(MarkerKind::SegmentEnd, &format!("part {pos}"), &[], &[]));
            }
            if pos + 1 < boundaries.len() {
                let mut m = marker(MarkerKind::SegmentStart, &format!("part {}", pos + 1), &[], &[]);
                m.participants = users.clone();
                m.key_objects = objects.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
                f.markers.push(m);
            }
        }
        frames.push(f);
    }
    RawCapture { frames }
}

/// A valid document drawn from `seed` with at most `max_events` events.
pub fn random_document(seed: u64, max_events: usize) -> MaredDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let spec = RandomCaptureSpec {
        frames: rng.gen_range(2..30),
        users: rng.gen_range(1..=3),
        objects: rng.gen_range(0..=4),
        markers: rng.gen_bool(0.3),
    };
    let mut doc =
        ingest(&random_capture(seed, spec), &LoggerConfig::default()).expect("generated captures always ingest");
    let keep_interactions = doc.interaction_events.len().min(max_events / 2 + max_events % 2);
    doc.interaction_events.truncate(keep_interactions);
    doc.state_change_events.truncate(max_events - keep_interactions);
    let kept: Vec<String> = doc.interaction_events.iter().map(|e| e.id.clone()).collect();
    for s in &mut doc.state_change_events {
        if s.cause_event_id.as_ref().is_some_and(|c| !kept.contains(c)) {
            s.cause_event_id = None;
        }
    }
    doc
}
