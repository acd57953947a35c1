// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::model::Timestamp;

/// From `wall_start` on, experience time advances at `rate` from `exp_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClockSegment {
    pub wall_start: f64,
    pub exp_start: Timestamp,
    pub rate: f64,
}

impl ClockSegment {
    fn exp_at(&self, wall: f64) -> f64 {
        self.exp_start.0 + self.rate * (wall - self.wall_start)
    }
}

/// Piecewise-linear map from wall-clock seconds to experience time.
///
/// Segments are ordered by strictly increasing `wall_start`. The map is
/// continuous except where a segment deliberately restarts at a new
/// experience time (a resume after a branch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClockMap {
    segments: Vec<ClockSegment>,
}

impl ClockMap {
    pub fn new(exp_start: Timestamp, rate: f64) -> Self {
        ClockMap { segments: vec![ClockSegment { wall_start: 0.0, exp_start, rate }] }
    }

    pub fn segments(&self) -> &[ClockSegment] {
        &self.segments
    }

    pub fn current(&self) -> &ClockSegment {
        self.segments.last().expect("clock map is never empty")
    }

    fn segment_at(&self, wall: f64) -> &ClockSegment {
        let i = self.segments.partition_point(|s| s.wall_start <= wall);
        &self.segments[i.saturating_sub(1)]
    }

    pub fn exp_at(&self, wall: f64) -> Timestamp {
        Timestamp(self.segment_at(wall).exp_at(wall))
    }

    /// Continues from `wall` at a new rate, keeping the map continuous.
    pub fn set_rate(&mut self, wall: f64, rate: f64) {
        let exp = self.exp_at(wall);
        self.restart(wall, exp, rate);
    }

    /// Starts a new segment at `wall`. A segment already starting at `wall`
    /// is replaced so wall starts stay strictly increasing.
    pub fn restart(&mut self, wall: f64, exp: Timestamp, rate: f64) {
        let seg = ClockSegment { wall_start: wall, exp_start: exp, rate };
        match self.segments.last_mut() {
            Some(last) if last.wall_start == wall => *last = seg,
            _ => self.segments.push(seg),
        }
    }

    /// Wall time at which the current segment reaches `exp`, if it ever does.
    pub fn wall_reaching(&self, exp: f64) -> Option<f64> {
        let cur = self.current();
        if cur.rate > 0.0 {
            Some(cur.wall_start + (exp - cur.exp_start.0) / cur.rate)
        } else if exp == cur.exp_start.0 {
            Some(cur.wall_start)
        } else {
            None
        }
    }

    /// Played stretches `(wall_from, wall_to, segment)` with positive rate.
    /// The last segment is open ended and reported up to `wall_end`.
    pub fn played(&self, wall_end: f64) -> Vec<(f64, f64, ClockSegment)> {
        let mut out = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            let to = self.segments.get(i + 1).map_or(wall_end, |n| n.wall_start);
            if s.rate > 0.0 && to > s.wall_start {
                out.push((s.wall_start, to, *s));
            }
        }
        out
    }
}
