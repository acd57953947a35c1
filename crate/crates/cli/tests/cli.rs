// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use mared_core::codec::{decode_keyframed, encode_document, encode_log, encode_raw_capture, DecodeMode};
use mared_core::fixtures::{random_capture, RandomCaptureSpec};
use mared_core::service::{replay_trace, ServiceConfig, WireMessage};
use mared_core::InteractionInput;
use tempfile::TempDir;

fn mared(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mared")).args(args).env_remove("MARED_CONFIG").output().unwrap()
}

fn ok(out: &Output) {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    /// drone.rawcap -> drone.mared -> drone.kmared at θ = 0.5
    fn drone(&self) {
        ok(&mared(&["sample", "drone", "-o", &self.s("drone.rawcap")]));
        ok(&mared(&["ingest", &self.s("drone.rawcap"), "-o", &self.s("drone.mared")]));
        ok(&mared(&["distill", &self.s("drone.mared"), "--threshold", "0.5", "-o", &self.s("drone.kmared")]));
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn threshold_out_of_range_is_a_usage_error() {
    let w = Work::new();
    w.drone();
    let out = mared(&["distill", &w.s("drone.mared"), "--threshold", "1.5", "-o", &w.s("x.kmared")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("mared-error:"), "{}", stderr(&out));
    assert!(stderr(&out).contains("1.5"));
    assert!(!w.path("x.kmared").exists());
}

#[test]
fn threshold_one_keeps_no_keyframes() {
    let w = Work::new();
    w.drone();
    ok(&mared(&["distill", &w.s("drone.mared"), "--threshold", "1.0", "-o", &w.s("none.kmared")]));
    let kdoc = decode_keyframed(&read(&w.path("none.kmared")), DecodeMode::Strict).unwrap();
    assert!(kdoc.keyframes.is_empty());
    assert_eq!(kdoc.threshold, 1.0);
}

#[test]
fn play_report_matches_the_harness() {
    let w = Work::new();
    w.drone();
    ok(&mared(&["sample", "question-trace", "-o", &w.s("question.trace")]));
    ok(&mared(&[
        "play",
        &w.s("drone.kmared"),
        "--trace",
        &w.s("question.trace"),
        "--report",
        &w.s("out.log"),
        "--export",
        &w.s("session.mared"),
    ]));
    let kdoc = decode_keyframed(&read(&w.path("drone.kmared")), DecodeMode::Strict).unwrap();
    let trace = mared_core::codec::decode_trace(&read(&w.path("question.trace"))).unwrap();
    let replay = replay_trace(&kdoc, &trace, &ServiceConfig::default()).unwrap();
    assert_eq!(read(&w.path("out.log")), encode_log(&replay.log).unwrap());
    assert_eq!(read(&w.path("session.mared")), encode_document(&replay.export).unwrap());
    ok(&mared(&["validate", &w.s("session.mared")]));
}

#[test]
fn speed_flag_sets_the_base_rate() {
    let w = Work::new();
    w.drone();
    let out = mared(&["play", &w.s("drone.kmared"), "--speed", "2"]);
    ok(&out);
    let log = String::from_utf8(out.stdout).unwrap();
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(last["type"], "ended");
    assert_eq!(last["wallTime"], 10.0);
    assert_eq!(mared(&["play", &w.s("drone.kmared"), "--speed", "0"]).status.code(), Some(2));
}

#[test]
fn validate_reports_each_violation() {
    let w = Work::new();
    w.drone();
    ok(&mared(&["validate", &w.s("drone.rawcap")]));
    ok(&mared(&["validate", &w.s("drone.mared")]));
    let out = mared(&["validate", &w.s("drone.kmared")]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 keyframes"));

    let broken = read(&w.path("drone.mared")).replace("\"actor\": \"expert\"", "\"actor\": \"ghost\"");
    std::fs::write(w.path("broken.mared"), broken).unwrap();
    let out = mared(&["validate", &w.s("broken.mared")]);
    assert_eq!(out.status.code(), Some(1));
    let lines: Vec<String> = stderr(&out).lines().map(String::from).collect();
    assert!(lines.iter().all(|l| l.starts_with("mared-error:")), "{lines:?}");
    assert!(lines.iter().any(|l| l.contains("danglingReference(ghost)")), "{lines:?}");

    std::fs::write(w.path("cut.mared"), &read(&w.path("drone.mared"))[..200]).unwrap();
    let out = mared(&["validate", &w.s("cut.mared")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["frobnicate"][..],
        &["distill", "x.mared", "--bogus"],
        &["serve", "x.kmared"],
        &["serve", "x.kmared", "--port", "99999"],
    ] {
        let out = mared(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).starts_with("mared-error: usage:"), "{}", stderr(&out));
    }
    ok(&mared(&["--help"]));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = mared(&["validate", "/nonexistent/doc.mared"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("mared-error: /nonexistent/doc.mared"));
}

#[test]
fn config_file_and_environment_fallback() {
    let w = Work::new();
    w.drone();
    std::fs::write(w.path("conf.json"), r#"{"threshold": 1.0}"#).unwrap();
    let run = |extra_env: Option<&str>, args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mared"));
        c.args(args).env_remove("MARED_CONFIG");
        if let Some(p) = extra_env {
            c.env("MARED_CONFIG", p);
        }
        c.output().unwrap()
    };
    let conf = w.s("conf.json");
    ok(&run(Some(&conf), &["distill", &w.s("drone.mared"), "-o", &w.s("env.kmared")]));
    assert!(decode_keyframed(&read(&w.path("env.kmared")), DecodeMode::Strict).unwrap().keyframes.is_empty());

    // the flag beats the file
    ok(&run(None, &["distill", &w.s("drone.mared"), "--config", &conf, "--threshold", "0.5", "-o", &w.s("f.kmared")]));
    assert_eq!(decode_keyframed(&read(&w.path("f.kmared")), DecodeMode::Strict).unwrap().keyframes.len(), 3);

    assert_eq!(run(None, &["distill", &w.s("drone.mared")]).status.code(), Some(2));
    std::fs::write(w.path("bad.json"), r#"{"thresold": 0.5}"#).unwrap();
    let out = run(Some(&w.s("bad.json")), &["distill", &w.s("drone.mared"), "--threshold", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("thresold"));
}

#[test]
fn serve_over_stdio() {
    let w = Work::new();
    w.drone();
    let mut child = Command::new(env!("CARGO_BIN_EXE_mared"))
        .args(["serve", &w.s("drone.kmared"), "--stdio", "--lockstep"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let input = InteractionInput {
        wall_time: 4.0,
        kind: mared_core::playback::InputKind::Speech,
        payload: "why?".into(),
        target: None,
    };
    let mut body = serde_json::to_value(&input).unwrap();
    body["wallTime"] = 4.0.into();
    let lines = [
        serde_json::json!({"type": "inject", "seq": 1, "body": body}).to_string(),
        r#"{"type": "tick", "seq": 2, "body": {"wallTime": 60}}"#.to_string(),
    ];
    {
        let mut stdin = child.stdin.take().unwrap();
        for l in &lines {
            writeln!(stdin, "{l}").unwrap();
        }
    }
    let out = child.wait_with_output().unwrap();
    ok(&out);
    let msgs: Vec<WireMessage> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<String> =
        msgs.iter().map(|m| serde_json::to_value(m.kind).unwrap().as_str().unwrap().to_owned()).collect();
    assert_eq!(kinds, ["hello", "state", "branchOpened", "state", "branchClosed", "ended", "state"]);
    assert_eq!(msgs[3].reply_to, Some(1));
}

#[test]
fn generated_captures_survive_the_pipeline() {
    let w = Work::new();
    std::fs::write(w.path("empty.trace"), "").unwrap();
    for seed in 0..8u64 {
        let spec = RandomCaptureSpec {
            frames: 4 + seed as usize * 3,
            users: 1 + seed as usize % 3,
            objects: seed as usize % 4,
            markers: seed % 2 == 0,
        };
        std::fs::write(w.path("g.rawcap"), encode_raw_capture(&random_capture(seed, spec)).unwrap()).unwrap();
        ok(&mared(&["ingest", &w.s("g.rawcap"), "-o", &w.s("g.mared")]));
        ok(&mared(&["distill", &w.s("g.mared"), "--threshold", "0.4", "-o", &w.s("g.kmared")]));
        ok(&mared(&["play", &w.s("g.kmared"), "--trace", &w.s("empty.trace"), "--report", &w.s("g.log")]));
        assert!(read(&w.path("g.log")).lines().last().unwrap().contains("\"ended\""), "seed {seed}");
    }
}
