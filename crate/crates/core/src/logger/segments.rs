// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use crate::model::{EntityKind, InteractionEvent, SemanticExperienceSegment, Timestamp};

use super::{LoggerConfig, LoggerError, MarkerKind, SegmentMarker};

/// Time span of one event plus who and what it involves.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSpan {
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub participants: Vec<String>,
    pub key_objects: Vec<String>,
}

impl EventSpan {
    pub fn bare(t_start: Timestamp, t_end: Timestamp) -> Self {
        EventSpan { t_start, t_end, participants: Vec::new(), key_objects: Vec::new() }
    }

    pub fn from_interaction(e: &InteractionEvent, kinds: &HashMap<String, EntityKind>) -> Self {
        let mut span = EventSpan::bare(e.t_start, e.t_end);
        span.participants.push(e.actor.clone());
        if let Some(t) = &e.target {
            match kinds.get(t) {
                Some(EntityKind::User) => span.participants.push(t.clone()),
                _ => span.key_objects.push(t.clone()),
            }
        }
        span
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedMarker {
    pub t: Timestamp,
    pub marker: SegmentMarker,
}

/// What the fallback segment needs to know about the capture.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureExtent {
    pub start: Timestamp,
    pub end: Timestamp,
    pub has_entities: bool,
    pub users: Vec<String>,
}

fn push_unique(list: &mut Vec<String>, items: &[String]) {
    for i in items {
        if !list.contains(i) {
            list.push(i.clone());
        }
    }
}

/// Segments mirror the markers when any exist; otherwise events are gap-clustered.
pub fn build_segments(
    events: &[EventSpan],
    markers: &[TimedMarker],
    extent: &CaptureExtent,
    config: &LoggerConfig,
) -> Result<Vec<SemanticExperienceSegment>, LoggerError> {
    if !markers.is_empty() {
        return from_markers(markers);
    }
    if events.is_empty() {
        if !extent.has_entities {
            return Ok(Vec::new());
        }
        let end =
            if extent.end > extent.start { extent.end } else { Timestamp(extent.start.0 + config.min_segment_span) };
        return Ok(vec![SemanticExperienceSegment {
            id: "seg-1".into(),
            label: "capture".into(),
            t_start: extent.start,
            t_end: end,
            participants: extent.users.clone(),
            key_objects: Vec::new(),
        }]);
    }
    Ok(cluster(events, config))
}

fn cluster(events: &[EventSpan], config: &LoggerConfig) -> Vec<SemanticExperienceSegment> {
    let mut sorted: Vec<&EventSpan> = events.iter().collect();
    sorted.sort_by(|a, b| a.t_start.0.total_cmp(&b.t_start.0));

    let mut clusters: Vec<SemanticExperienceSegment> = Vec::new();
    for e in sorted {
        match clusters.last_mut() {
            Some(c) if e.t_start.0 - c.t_end.0 <= config.gap_seconds => {
                if e.t_end > c.t_end {
                    c.t_end = e.t_end;
                }
                push_unique(&mut c.participants, &e.participants);
                push_unique(&mut c.key_objects, &e.key_objects);
            }
            _ => clusters.push(SemanticExperienceSegment {
                id: format!("seg-{}", clusters.len() + 1),
                label: format!("segment {}", clusters.len() + 1),
                t_start: e.t_start,
                t_end: e.t_end,
                participants: e.participants.clone(),
                key_objects: e.key_objects.clone(),
            }),
        }
    }
    // instantaneous clusters get a short span, never reaching the next cluster
    for i in 0..clusters.len() {
        if clusters[i].t_end > clusters[i].t_start {
            continue;
        }
        let room = clusters.get(i + 1).map_or(f64::INFINITY, |n| (n.t_start.0 - clusters[i].t_start.0) / 2.0);
        clusters[i].t_end = Timestamp(clusters[i].t_start.0 + config.min_segment_span.min(room));
    }
    clusters
}

fn from_markers(markers: &[TimedMarker]) -> Result<Vec<SemanticExperienceSegment>, LoggerError> {
    let mut ordered: Vec<&TimedMarker> = markers.iter().collect();
    // a segment may end and the next begin on the same frame
    ordered.sort_by(|a, b| {
        a.t.0.total_cmp(&b.t.0).then_with(|| {
            let rank = |m: &TimedMarker| (m.marker.kind == MarkerKind::SegmentStart) as u8;
            rank(a).cmp(&rank(b))
        })
    });

    let mut out = Vec::new();
    let mut open: Option<&TimedMarker> = None;
    for m in ordered {
        match (m.marker.kind, open) {
            (MarkerKind::SegmentStart, None) => open = Some(m),
            (MarkerKind::SegmentStart, Some(o)) => {
                return Err(LoggerError::MalformedMarkers(format!(
                    "segment `{}` starts at {} while `{}` is still open",
                    m.marker.label, m.t.0, o.marker.label
                )))
            }
            (MarkerKind::SegmentEnd, None) => {
                return Err(LoggerError::MalformedMarkers(format!(
                    "segment `{}` ends at {} without a start",
                    m.marker.label, m.t.0
                )))
            }
            (MarkerKind::SegmentEnd, Some(o)) => {
                if o.marker.label != m.marker.label {
                    return Err(LoggerError::MalformedMarkers(format!(
                        "segment `{}` closed by end marker `{}` at {}",
                        o.marker.label, m.marker.label, m.t.0
                    )));
                }
                if m.t <= o.t {
                    return Err(LoggerError::MalformedMarkers(format!(
                        "segment `{}` has an empty span at {}",
                        o.marker.label, m.t.0
                    )));
                }
                out.push(SemanticExperienceSegment {
                    id: format!("seg-{}", out.len() + 1),
                    label: o.marker.label.clone(),
                    t_start: o.t,
                    t_end: m.t,
                    participants: o.marker.participants.clone(),
                    key_objects: o.marker.key_objects.clone(),
                });
                open = None;
            }
        }
    }
    if let Some(o) = open {
        return Err(LoggerError::MalformedMarkers(format!(
            "segment `{}` started at {} is never closed",
            o.marker.label, o.t.0
        )));
    }
    Ok(out)
}
