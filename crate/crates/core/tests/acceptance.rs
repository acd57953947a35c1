// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Runs every criterion in turn, prints one PASS/FAIL
//! line each and exits non-zero if any failed.

// negated comparisons are deliberate: a NaN must fail a check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mared_core::codec::{
    decode_bytes, decode_document, decode_keyframed, encode_document, encode_keyframed, encode_log, DecodeMode,
};
use mared_core::distill::{
    candidate_times, distill, score_interaction, score_state_change, ScoringWeights, Threshold, MERGE_WINDOW,
};
use mared_core::fixtures::{cup_capture, drone_capture, random_document};
use mared_core::logger::{ingest, LoggerConfig};
use mared_core::model::{KeyframedDocument, MaredDocument, Pose, SpaceAnchor, Timestamp};
use mared_core::playback::spatial::{adapt_spatial, fit};
use mared_core::playback::{
    export_session, InputKind, InteractionInput, Mode, PlaybackConfig, PlaybackSession, SessionEvent, SessionEventKind,
};
use mared_core::service::{replay_trace, ServiceConfig};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

/// Name, time budget, check.
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixtures() -> Vec<(&'static str, MaredDocument)> {
    let config = LoggerConfig::default();
    vec![("drone", ingest(&drone_capture(), &config).unwrap()), ("cup", ingest(&cup_capture(), &config).unwrap())]
}

fn theta(x: f64) -> Threshold {
    Threshold::new(x).unwrap()
}

fn times(kdoc: &KeyframedDocument) -> Vec<f64> {
    kdoc.keyframes.iter().map(|k| k.t.0).collect()
}

fn question(wall: f64) -> InteractionInput {
    InteractionInput { wall_time: wall, kind: InputKind::Speech, payload: "what does this do?".into(), target: None }
}

fn theta_endpoints() -> Check {
    let w = ScoringWeights::default();
    for (name, doc) in fixtures() {
        let all = distill(&doc, theta(0.0), &w).map_err(|e| e.to_string())?;
        let candidates = candidate_times(&doc);
        ensure!(!candidates.is_empty(), "{name}: no candidates");
        ensure!(times(&all) == candidates, "{name}: θ=0 gave {:?}, candidates {:?}", times(&all), candidates);
        let none = distill(&doc, theta(1.0), &w).map_err(|e| e.to_string())?;
        ensure!(none.keyframes.is_empty(), "{name}: θ=1 kept {:?}", times(&none));
    }
    Ok(())
}

fn theta_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = ScoringWeights::default();
    for seed in 0..200u64 {
        let doc = random_document(seed, 50);
        for _ in 0..10 {
            let (a, b) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let low = times(&distill(&doc, theta(lo), &w).map_err(|e| e.to_string())?);
            let high = times(&distill(&doc, theta(hi), &w).map_err(|e| e.to_string())?);
            ensure!(
                high.iter().all(|t| low.contains(t)),
                "seed {seed}: K({hi}) = {high:?} not within K({lo}) = {low:?}"
            );
        }
    }
    Ok(())
}

/// Every candidate time, scored by a linear scan over all events, grouped
/// by the merge window, kept by the threshold.
fn brute_force(doc: &MaredDocument, th: f64) -> Vec<(f64, f64, Vec<String>)> {
    let w = ScoringWeights::default();
    let mut spans = Vec::new();
    for e in &doc.interaction_events {
        spans.push((e.id.clone(), e.t_start.0, e.t_end.0, score_interaction(e, doc, &w).unwrap()));
    }
    for s in &doc.state_change_events {
        spans.push((s.id.clone(), s.t_start.0, s.t_end.0, score_state_change(s, doc, &w).unwrap()));
    }
    let mut cands: Vec<f64> = doc
        .interaction_events
        .iter()
        .flat_map(|e| [e.t_start.0, e.t_end.0])
        .chain(doc.state_change_events.iter().map(|s| s.t_end.0))
        .collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();

    let mut groups: Vec<Vec<(f64, f64, Vec<String>)>> = Vec::new();
    for t in cands {
        let best = spans.iter().filter(|s| s.1 <= t && t <= s.2).map(|s| s.3).fold(0.0, f64::max);
        let ids = spans.iter().filter(|s| s.1 <= t && t <= s.2 && s.3 == best).map(|s| s.0.clone()).collect();
        let joins = groups.last().is_some_and(|g| t - g.last().unwrap().0 < MERGE_WINDOW);
        if !joins {
            groups.push(Vec::new());
        }
        groups.last_mut().unwrap().push((t, best, ids));
    }
    groups
        .into_iter()
        .map(|g| g.iter().fold(g[0].clone(), |rep, c| if c.1 > rep.1 { c.clone() } else { rep }))
        .filter(|c| th == 0.0 || (th < 1.0 && c.1 >= th))
        .collect()
}

fn distiller_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..200u64 {
        let doc = random_document(1000 + seed, 50);
        let events = doc.interaction_events.len() + doc.state_change_events.len();
        ensure!(events <= 50, "seed {seed}: {events} events");
        let th = if seed % 10 == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
        let got: Vec<(f64, f64, Vec<String>)> = distill(&doc, theta(th), &ScoringWeights::default())
            .map_err(|e| e.to_string())?
            .keyframes
            .into_iter()
            .map(|k| (k.t.0, k.score, k.sources))
            .collect();
        let want = brute_force(&doc, th);
        ensure!(got == want, "seed {seed}, θ {th}: got {got:?}, want {want:?}");
    }
    Ok(())
}

fn clock_contract() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for run in 0..500u64 {
        let kdoc =
            distill(&random_document(2000 + run, 12), theta(rng.gen_range(0.0..1.0)), &ScoringWeights::default())
                .map_err(|e| e.to_string())?;
        let mut s = PlaybackSession::open(&kdoc, None, PlaybackConfig::default()).map_err(|e| e.to_string())?;
        let entities: Vec<String> = kdoc.document.entities.iter().map(|e| e.id.clone()).collect();
        let mut wall = 0.0;
        // (wall, exp, mode) after every step
        let mut seen = vec![(0.0, s.exp_time().0, s.mode())];
        for _ in 0..rng.gen_range(0..40) {
            wall += rng.gen_range(0.0..2.0);
            let input = |kind, payload: &str, target| InteractionInput {
                wall_time: wall,
                kind,
                payload: payload.into(),
                target,
            };
            let _ = match rng.gen_range(0..6) {
                0 | 1 => s.tick(wall).map(|_| ()),
                2 => s.inject(&input(InputKind::Speech, "why?", None)).map(|_| ()),
                3 => s.inject(&input(InputKind::Selection, "done", None)).map(|_| ()),
                4 => s.inject(&input(InputKind::Gaze, "", None)).map(|_| ()),
                _ => s
                    .inject(&input(
                        InputKind::Gesture,
                        "",
                        entities.get(rng.gen_range(0..entities.len().max(1))).cloned(),
                    ))
                    .map(|_| ()),
            };
            seen.push((wall, s.exp_time().0, s.mode()));
        }
        s.run_to_end().map_err(|e| e.to_string())?;

        let log = s.log();
        for pair in log.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            ensure!(b.wall_time >= a.wall_time, "run {run}: wall went back in the log");
            let resumed = matches!(b.kind, SessionEventKind::BranchClosed { .. });
            ensure!(
                b.exp_time.0 >= a.exp_time.0 || resumed,
                "run {run}: expTime {} -> {} at {:?}",
                a.exp_time.0,
                b.exp_time.0,
                b.kind
            );
        }
        for b in s.branches() {
            let opened = b.opened_at;
            let closed = b.closed_at.unwrap_or(f64::INFINITY);
            for &(w, exp, mode) in &seen {
                if w >= opened && w < closed {
                    ensure!(mode == Mode::Branch, "run {run}: not in branch at {w}");
                    ensure!(exp == b.parent_exp_time.0, "run {run}: main clock moved to {exp} inside {}", b.id);
                }
            }
            for e in log.iter().filter(|e| e.wall_time > opened && e.wall_time < closed) {
                ensure!(e.exp_time == b.parent_exp_time, "run {run}: {:?} logged at {}", e.kind, e.exp_time.0);
            }
        }
        // between discontinuities the replayed positions never move back
        let mut last = f64::NEG_INFINITY;
        let mut last_closed = 0;
        for &(w, exp, _) in &seen {
            let closed = s.branches().iter().filter(|b| b.closed_at.is_some_and(|c| c <= w)).count();
            ensure!(exp >= last || closed > last_closed, "run {run}: sampled expTime {last} -> {exp}");
            last = exp;
            last_closed = closed;
        }
    }
    Ok(())
}

fn drone_scenario() -> Check {
    let doc = ingest(&drone_capture(), &LoggerConfig::default()).map_err(|e| e.to_string())?;
    let labels: Vec<(&str, f64, f64)> =
        doc.segments.iter().map(|s| (s.label.as_str(), s.t_start.0, s.t_end.0)).collect();
    ensure!(labels == vec![("drone principles", 0.0, 10.0), ("drone assembly", 10.0, 20.0)], "segments {labels:?}");
    let kdoc = distill(&doc, theta(0.5), &ScoringWeights::default()).map_err(|e| e.to_string())?;
    ensure!(times(&kdoc) == vec![5.0, 10.0, 15.0], "keyframes {:?}", times(&kdoc));
    let config = ServiceConfig { lockstep: true, ..ServiceConfig::default() };
    ensure!(config.playback.post_branch_slowdown == 0.8, "σ is {}", config.playback.post_branch_slowdown);
    let replay = replay_trace(&kdoc, &[question(4.0)], &config).map_err(|e| e.to_string())?;

    const EPS: f64 = 1e-9;
    let opened: Vec<&SessionEvent> =
        replay.log.iter().filter(|e| matches!(e.kind, SessionEventKind::BranchOpened { .. })).collect();
    let closed: Vec<&SessionEvent> =
        replay.log.iter().filter(|e| matches!(e.kind, SessionEventKind::BranchClosed { .. })).collect();
    ensure!(opened.len() == 1 && closed.len() == 1, "{} opened, {} closed", opened.len(), closed.len());
    let pos = |e: &SessionEvent| replay.log.iter().position(|x| x == e).unwrap();
    ensure!(pos(opened[0]) < pos(closed[0]), "branchClosed logged before branchOpened");
    ensure!((opened[0].exp_time.0 - 4.0).abs() < EPS, "branchOpened at expTime {}", opened[0].exp_time.0);
    let SessionEventKind::BranchClosed { resume_at, rate, .. } = &closed[0].kind else { unreachable!() };
    ensure!((resume_at.0 - 5.0).abs() < EPS, "resumeAt {}", resume_at.0);
    ensure!((rate - 0.8).abs() < EPS, "post-resume rate {rate}");
    ensure!((closed[0].wall_time - 11.0).abs() < EPS, "branchClosed at wall {}", closed[0].wall_time);

    // main to 4, 5 s answer, 2 s grace, the remaining 15 s at 0.8
    let expected = 4.0 + 5.0 + 2.0 + (20.0 - 5.0) / 0.8;
    let end = replay.log.last().unwrap();
    ensure!(matches!(end.kind, SessionEventKind::Ended), "log ends with {:?}", end.kind);
    ensure!((end.wall_time - expected).abs() < EPS, "ended at wall {}, want {expected}", end.wall_time);
    Ok(())
}

fn codec_round_trip() -> Check {
    let check = |label: &str, doc: &MaredDocument| -> Check {
        let text = encode_document(doc).map_err(|e| format!("{label}: {e}"))?;
        let back = decode_document(&text, DecodeMode::Strict).map_err(|e| format!("{label}: {e}"))?;
        ensure!(&back == doc, "{label}: decode(encode(d)) != d");
        ensure!(encode_document(&back).unwrap() == text, "{label}: re-encoding changed bytes");
        let kdoc = distill(doc, theta(0.3), &ScoringWeights::default()).map_err(|e| e.to_string())?;
        let ktext = encode_keyframed(&kdoc).map_err(|e| format!("{label}: {e}"))?;
        let kback = decode_keyframed(&ktext, DecodeMode::Strict).map_err(|e| format!("{label}: {e}"))?;
        ensure!(kback == kdoc, "{label}: keyframed round trip differs");
        ensure!(encode_keyframed(&kback).unwrap() == ktext, "{label}: keyframed bytes differ");
        Ok(())
    };
    for (name, doc) in fixtures() {
        check(name, &doc)?;
    }
    for seed in 0..500u64 {
        check(&format!("random {seed}"), &random_document(3000 + seed, 40))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let seedbed = encode_document(&fixtures()[0].1).unwrap().into_bytes();
    for i in 0..10_000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..rng.gen_range(0..256)).map(|_| rng.gen()).collect()
        } else {
            // mostly valid JSON with a few bytes flipped or cut
            let mut b = seedbed.clone();
            for _ in 0..rng.gen_range(1..8) {
                let at = rng.gen_range(0..b.len());
                b[at] = rng.gen();
            }
            b.truncate(rng.gen_range(0..=b.len()));
            b
        };
        for mode in [DecodeMode::Strict, DecodeMode::Lenient] {
            let outcome = catch_unwind(AssertUnwindSafe(|| decode_bytes(&bytes, mode)));
            ensure!(outcome.is_ok(), "decoder panicked on input #{i}");
        }
    }
    Ok(())
}

fn spatial_adaptation() -> Check {
    const EPS: f64 = 1e-6;
    let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
    let t = Vector3::new(3.0, -2.0, 0.5);
    let source = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 2.0, 0.0),
        Vector3::new(0.5, 0.5, 1.5),
    ];
    // hand-rotated: (x, y, z) -> (-y, x, z)
    let target: Vec<Vector3<f64>> = source.iter().map(|p| Vector3::new(-p.y, p.x, p.z) + t).collect();
    let (tf, degraded) = fit(&source, &target, false);
    ensure!(!degraded, "fit degraded");
    ensure!(tf.rotation.angle_to(&q) < EPS, "rotation off by {}", tf.rotation.angle_to(&q));
    ensure!((tf.translation - t).norm() < EPS, "translation {:?}", tf.translation);
    for (s, d) in source.iter().zip(&target) {
        let r = (tf.apply_point(*s) - d).norm();
        ensure!(r < EPS, "anchor residual {r}");
    }

    let kdoc = distill(&fixtures()[0].1, theta(0.5), &ScoringWeights::default()).unwrap();
    let anchors: Vec<SpaceAnchor> = kdoc
        .document
        .header
        .anchors
        .iter()
        .map(|a| {
            let p = a.pose.translation();
            SpaceAnchor { id: a.id.clone(), pose: Pose::at([-p.y + t.x, p.x + t.y, p.z + t.z]) }
        })
        .collect();
    let adapted = adapt_spatial(&kdoc, &anchors, false).map_err(|e| e.to_string())?;
    ensure!(!adapted.degraded && adapted.residual < EPS, "residual {}", adapted.residual);
    let (before, after) = (&kdoc.document, &adapted.document.document);
    for ts in [0.0, 5.0, 10.0, 12.5, 20.0] {
        let at = Timestamp(ts);
        for a in &before.entities {
            for b in &before.entities {
                let d0 = before.pose_at(&a.id, at).unwrap().distance_to(&before.pose_at(&b.id, at).unwrap());
                let d1 = after.pose_at(&a.id, at).unwrap().distance_to(&after.pose_at(&b.id, at).unwrap());
                ensure!((d0 - d1).abs() < EPS, "{}-{} at {ts}: {d0} vs {d1}", a.id, b.id);
            }
        }
    }
    Ok(())
}

/// (kind, referenced id) for everything the viewer would have seen.
fn ordering(log: &[SessionEvent]) -> Vec<String> {
    log.iter()
        .map(|e| match &e.kind {
            SessionEventKind::SegmentStarted { segment } => format!("segmentStarted {segment}"),
            SessionEventKind::SegmentEnded { segment } => format!("segmentEnded {segment}"),
            SessionEventKind::KeyframePassed { keyframe } => format!("keyframePassed {}", keyframe.0),
            SessionEventKind::EventStarted { event } => format!("eventStarted {event}"),
            other => format!("{other:?}"),
        })
        .collect()
}

fn closure_property() -> Check {
    let config = ServiceConfig::default();
    for (name, doc) in fixtures() {
        let kdoc = distill(&doc, theta(0.5), &ScoringWeights::default()).map_err(|e| e.to_string())?;
        let mut s = PlaybackSession::open(&kdoc, None, config.playback.clone()).map_err(|e| e.to_string())?;
        s.run_to_end().map_err(|e| e.to_string())?;
        let exported = export_session(&s).map_err(|e| e.to_string())?;
        let text = encode_document(&exported).map_err(|e| e.to_string())?;
        let again = decode_document(&text, DecodeMode::Strict).map_err(|e| format!("{name}: {e}"))?;
        let rekeyed = distill(&again, theta(0.5), &ScoringWeights::default()).map_err(|e| e.to_string())?;
        let replay = replay_trace(&rekeyed, &[], &config).map_err(|e| e.to_string())?;
        let (first, second) = (ordering(s.log()), ordering(&replay.log));
        ensure!(first == second, "{name}: {first:?}\nvs\n{second:?}");
    }
    Ok(())
}

fn determinism() -> Check {
    let config = ServiceConfig { lockstep: true, ..ServiceConfig::default() };
    let trace = [question(3.0), question(6.0), question(20.0)];
    for (name, doc) in fixtures() {
        let kdoc = distill(&doc, theta(0.5), &ScoringWeights::default()).map_err(|e| e.to_string())?;
        for t in [&trace[..0], &trace[..]] {
            let a = encode_log(&replay_trace(&kdoc, t, &config).map_err(|e| e.to_string())?.log).unwrap();
            let b = encode_log(&replay_trace(&kdoc, t, &config).map_err(|e| e.to_string())?.log).unwrap();
            ensure!(a.as_bytes() == b.as_bytes(), "{name}: logs differ");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("theta endpoints", Duration::from_secs(1), theta_endpoints),
        ("theta monotonicity", Duration::from_secs(10), theta_monotonicity),
        ("distiller oracle", Duration::from_secs(10), distiller_oracle),
        ("clock contract", Duration::from_secs(30), clock_contract),
        ("drone tutorial scenario", Duration::from_secs(1), drone_scenario),
        ("codec", Duration::from_secs(30), codec_round_trip),
        ("spatial adaptation", Duration::from_secs(1), spatial_adaptation),
        ("closure property", Duration::from_secs(1), closure_property),
        ("determinism", Duration::from_secs(5), determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome =
            outcome.and_then(|()| if took <= budget { Ok(()) } else { Err(format!("over budget of {budget:?}")) });
        match outcome {
            Ok(()) => println!("PASS {name} ({:.3} s)", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({:.3} s): {why}", took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
