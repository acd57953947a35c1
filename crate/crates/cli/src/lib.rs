// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

//! `mared` command line: capture ingest, keyframe distillation, headless
//! playback, the live session service and file validation.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
//! Every error line on stderr starts with `mared-error:`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use mared_core::codec::{
    self, decode_bytes, decode_keyframed, decode_raw_capture, decode_trace, encode_document, encode_keyframed,
    encode_log, encode_raw_capture, encode_trace, CodecError, DecodeMode, Decoded,
};
use mared_core::distill::{distill, ScoringWeights, Threshold};
use mared_core::fixtures::{cup_capture, drone_capture};
use mared_core::logger::{ingest_with_report, LoggerConfig, LoggerError};
use mared_core::model::KeyframedDocument;
use mared_core::playback::{InputKind, InteractionInput, PlaybackError};
use mared_core::service::{replay_trace, serve_stdio, ws, ServiceConfig, ServiceError};
use mared_core::validate::Violation;
use serde::Deserialize;

pub const CONFIG_ENV: &str = "MARED_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Codec { path: String, source: CodecError },
    #[error("{path}: {count} violation(s)")]
    Invalid { path: String, count: usize, violations: Vec<Violation> },
    #[error(transparent)]
    Logger(#[from] LoggerError),
    #[error(transparent)]
    Playback(#[from] PlaybackError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn codec(path: &Path, source: CodecError) -> Self {
        match source {
            CodecError::Invalid(violations) => {
                CliError::Invalid { path: path.display().to_string(), count: violations.len(), violations }
            }
            source => CliError::Codec { path: path.display().to_string(), source },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mared", version, about = "Record, distill and replay mixed-reality experiences")]
struct Cli {
    /// JSON settings file; falls back to $MARED_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a raw capture (.rawcap) into a semantic document (.mared).
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score events and keep keyframes at or above the threshold.
    Distill {
        input: PathBuf,
        #[arg(short, long, value_name = "θ")]
        threshold: Option<f64>,
        /// JSON file of scoring weights.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Replay a keyframed document headless against a scripted trace.
    Play {
        input: PathBuf,
        /// Viewer inputs, one JSON object per line. Empty if omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Base playback rate.
        #[arg(long)]
        speed: Option<f64>,
        /// Write the session log here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the session as a new document.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Host a live session over WebSocket at /session, or on stdin/stdout.
    Serve {
        input: PathBuf,
        #[arg(long, required_unless_present = "stdio")]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Advance time only on client tick messages.
        #[arg(long)]
        lockstep: bool,
        #[arg(long, conflicts_with_all = ["port"])]
        stdio: bool,
    },
    /// Check any mared file; the kind is taken from the extension.
    Validate { input: PathBuf },
    /// Write a bundled example file.
    Sample {
        which: SampleKind,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SampleKind {
    /// Drone tutorial capture (.rawcap).
    Drone,
    /// Cup hand-over capture (.rawcap).
    Cup,
    /// A question asked 4 s into the drone tutorial (.trace).
    QuestionTrace,
}

/// Settings file contents. Command-line flags win over it.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
struct Settings {
    logger: LoggerConfig,
    weights: Option<ScoringWeights>,
    threshold: Option<f64>,
    service: ServiceConfig,
}

/// Parses `argv` (program name first), runs the command and reports any
/// error on stderr. Returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("mared-error: usage: {first}");
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mared-error: {e}");
            if let CliError::Invalid { violations, .. } = &e {
                for v in violations {
                    eprintln!("mared-error: {v}");
                }
            }
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => {
            io::stdout().write_all(text.as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn settings(flag: Option<&Path>) -> Result<Settings, CliError> {
    let env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let Some(path) = flag.map(Path::to_path_buf).or(env) else {
        return Ok(Settings::default());
    };
    let text = read(&path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn load_keyframed(path: &Path) -> Result<KeyframedDocument, CliError> {
    decode_keyframed(&read(path)?, DecodeMode::Strict).map_err(|e| CliError::codec(path, e))
}

fn threshold(value: f64) -> Result<Threshold, CliError> {
    Threshold::new(value).map_err(|e| CliError::Usage(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let settings = settings(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { input, output } => {
            let raw = decode_raw_capture(&read(&input)?).map_err(|e| CliError::codec(&input, e))?;
            let report = ingest_with_report(&raw, &settings.logger)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            let text = encode_document(&report.document).map_err(|e| CliError::codec(&input, e))?;
            write_out(output.as_deref(), &text)
        }
        Command::Distill { input, threshold: flag, weights, output } => {
            let theta =
                flag.or(settings.threshold).ok_or_else(|| CliError::Usage("distill needs --threshold".into()))?;
            let theta = threshold(theta)?;
            let weights = match weights {
                Some(path) => serde_json::from_str(&read(&path)?)
                    .map_err(|e| CliError::Usage(format!("weights {}: {e}", path.display())))?,
                None => settings.weights.unwrap_or_default(),
            };
            weights.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let doc =
                codec::decode_document(&read(&input)?, DecodeMode::Strict).map_err(|e| CliError::codec(&input, e))?;
            let kdoc = distill(&doc, theta, &weights).map_err(|e| CliError::Usage(e.to_string()))?;
            log::info!("{} keyframes at θ = {}", kdoc.keyframes.len(), theta.value());
            let text = encode_keyframed(&kdoc).map_err(|e| CliError::codec(&input, e))?;
            write_out(output.as_deref(), &text)
        }
        Command::Play { input, trace, speed, report, export } => {
            let kdoc = load_keyframed(&input)?;
            let inputs = match &trace {
                Some(path) => decode_trace(&read(path)?).map_err(|e| CliError::codec(path, e))?,
                None => Vec::new(),
            };
            let mut config = settings.service;
            config.lockstep = true;
            if let Some(rate) = speed {
                config.playback.base_rate = rate;
            }
            config.playback.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let replay = replay_trace(&kdoc, &inputs, &config)?;
            let log = encode_log(&replay.log).map_err(|e| CliError::codec(&input, e))?;
            write_out(report.as_deref(), &log)?;
            if let Some(path) = export {
                let doc = encode_document(&replay.export).map_err(|e| CliError::codec(&path, e))?;
                write_out(Some(&path), &doc)?;
            }
            Ok(())
        }
        Command::Serve { input, port, host, lockstep, stdio } => {
            let kdoc = load_keyframed(&input)?;
            let mut config = settings.service;
            config.lockstep |= lockstep;
            if !(config.cadence_hz.is_finite() && config.cadence_hz > 0.0) {
                return Err(CliError::Usage(format!("cadenceHz must be positive, got {}", config.cadence_hz)));
            }
            config.playback.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            if stdio {
                serve_stdio(&kdoc, config, BufReader::new(io::stdin()), io::stdout())?;
            } else {
                let port = port.expect("clap requires --port without --stdio");
                let server = ws::spawn(&kdoc, config, (host.as_str(), port))?;
                eprintln!("listening on {}", server.url());
                server.wait();
            }
            Ok(())
        }
        Command::Validate { input } => validate_file(&input, &settings),
        Command::Sample { which, output } => {
            let text = match which {
                SampleKind::Drone => encode_raw_capture(&drone_capture()),
                SampleKind::Cup => encode_raw_capture(&cup_capture()),
                SampleKind::QuestionTrace => encode_trace(&[InteractionInput {
                    wall_time: 4.0,
                    kind: InputKind::Speech,
                    payload: "how does the drone lift off?".into(),
                    target: None,
                }]),
            }
            .map_err(|e| CliError::Codec { path: "<sample>".into(), source: e })?;
            write_out(output.as_deref(), &text)
        }
    }
}

fn validate_file(path: &Path, settings: &Settings) -> Result<(), CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let what = match ext {
        "rawcap" => {
            let raw = decode_raw_capture(&read(path)?).map_err(|e| CliError::codec(path, e))?;
            let report = ingest_with_report(&raw, &settings.logger)?;
            format!("raw capture, {} frames, ingests to {} events", raw.frames.len(), event_count(&report.document))
        }
        "trace" => {
            let inputs = decode_trace(&read(path)?).map_err(|e| CliError::codec(path, e))?;
            if let Some(i) = inputs.windows(2).position(|w| w[1].wall_time < w[0].wall_time) {
                return Err(CliError::Codec {
                    path: path.display().to_string(),
                    source: CodecError::Schema(format!("line {}: wallTime goes backwards", i + 2)),
                });
            }
            format!("trace, {} inputs", inputs.len())
        }
        _ => {
            let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
            match decode_bytes(&bytes, DecodeMode::Strict).map_err(|e| CliError::codec(path, e))? {
                Decoded::Document(doc) => format!("document, {} events", event_count(&doc)),
                Decoded::Keyframed(k) => {
                    format!("keyframed document, {} events, {} keyframes", event_count(&k.document), k.keyframes.len())
                }
            }
        }
    };
    println!("ok: {}: {what}", path.display());
    Ok(())
}

fn event_count(doc: &mared_core::model::MaredDocument) -> usize {
    doc.interaction_events.len() + doc.state_change_events.len()
}
