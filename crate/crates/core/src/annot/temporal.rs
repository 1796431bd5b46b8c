//! Temporal consistency of end-exclusive sub-task intervals.

use serde::{Deserialize, Serialize};

use super::grammar::SubTaskInterval;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalViolation {
    /// `index` starts at or before its predecessor.
    StartOrder { index: u32, prev_start: u32, start: u32 },
    /// Frames `[from, to)` are claimed by both intervals.
    Overlap { first: u32, second: u32, from: u32, to: u32 },
    /// Interval leaves `[0, num_frames]`.
    OutOfRange { index: u32, end: u32, num_frames: u32 },
    /// `end == start`.
    Empty { index: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TemporalReport {
    pub ok: bool,
    pub violations: Vec<TemporalViolation>,
}

/// Check start ordering, pairwise overlap, frame range and emptiness.
///
/// Intervals are taken in index order; `Onwards` ends resolve to
/// `num_frames`. Touching intervals such as `[0,8)` and `[8,15)` pass.
pub fn check_temporal(intervals: &[SubTaskInterval], num_frames: u32) -> TemporalReport {
    let mut ivs: Vec<(u32, u32, u32)> =
        intervals.iter().map(|iv| (iv.index, iv.start, iv.end_frame(num_frames))).collect();
    ivs.sort_by_key(|&(i, _, _)| i);
    let mut violations = Vec::new();
    for w in ivs.windows(2) {
        let ((_, ps, _), (i, s, _)) = (w[0], w[1]);
        if s <= ps {
            violations.push(TemporalViolation::StartOrder { index: i, prev_start: ps, start: s });
        }
    }
    for (a, &(ia, sa, ea)) in ivs.iter().enumerate() {
        for &(ib, sb, eb) in &ivs[a + 1..] {
            let (from, to) = (sa.max(sb), ea.min(eb));
            if from < to {
                violations.push(TemporalViolation::Overlap { first: ia, second: ib, from, to });
            }
        }
    }
    for &(i, s, e) in &ivs {
        if e > num_frames {
            violations.push(TemporalViolation::OutOfRange { index: i, end: e, num_frames });
        }
        if e == s {
            violations.push(TemporalViolation::Empty { index: i });
        }
    }
    TemporalReport { ok: violations.is_empty(), violations }
}
