//! Per-frame planning samples labelled with the sub-task about to start.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grammar::SubTaskInterval;
use super::temporal::check_temporal;
use super::TrajectoryRecord;

pub const DEFAULT_WINDOW: i64 = 4;
pub const DEFAULT_HISTORY_LEN: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningSample {
    pub trajectory_id: String,
    /// Up to `history_len` frames immediately before `current_frame`, oldest first.
    pub history_frames: Vec<u32>,
    pub current_frame: u32,
    pub goal_frame: u32,
    pub sub_task_index: u32,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("window must be non-negative, got {0}")]
    WindowNonPositive(i64),
    #[error("intervals are not temporally consistent")]
    Inconsistent,
    #[error("frame {frame} is not covered by any interval")]
    IntervalGap { frame: u32 },
    #[error("sub-task {index} has no instruction text")]
    UnknownSubTask { index: u32 },
    #[error("trajectory has no frames")]
    NoFrames,
}

/// One sample per frame `t`: if a sub-task starts in `(t, t + window]` the
/// earliest such one is the label, else the sub-task active at `t`.
///
/// The intervals must tile `[0, num_frames)` exactly.
pub fn label_samples(
    traj: &TrajectoryRecord,
    intervals: &[SubTaskInterval],
    window: i64,
    history_len: usize,
) -> Result<Vec<PlanningSample>, LabelError> {
    if window < 0 {
        return Err(LabelError::WindowNonPositive(window));
    }
    let n = traj.num_frames;
    if n == 0 {
        return Err(LabelError::NoFrames);
    }
    if !check_temporal(intervals, n).ok {
        return Err(LabelError::Inconsistent);
    }
    let mut ivs: Vec<(u32, u32, u32)> = intervals.iter().map(|iv| (iv.start, iv.end_frame(n), iv.index)).collect();
    ivs.sort_unstable();
    let mut cursor = 0;
    for &(s, e, _) in &ivs {
        if s != cursor {
            return Err(LabelError::IntervalGap { frame: cursor });
        }
        cursor = e;
    }
    if cursor != n {
        return Err(LabelError::IntervalGap { frame: cursor });
    }
    if let Some(&(_, _, index)) = ivs.iter().find(|&&(_, _, i)| i == 0 || i as usize > traj.sub_instructions.len()) {
        return Err(LabelError::UnknownSubTask { index });
    }

    let window = u32::try_from(window).unwrap_or(u32::MAX);
    let mut out = Vec::with_capacity(n as usize);
    let mut active = 0;
    for t in 0..n {
        while ivs[active].1 <= t {
            active += 1;
        }
        // Sorted, tiled intervals: the next start is the only candidate.
        let chosen = match ivs.get(active + 1) {
            Some(&(s, _, _)) if s <= t.saturating_add(window) => active + 1,
            _ => active,
        };
        let index = ivs[chosen].2;
        out.push(PlanningSample {
            trajectory_id: traj.id.clone(),
            history_frames: (t.saturating_sub(history_len as u32)..t).collect(),
            current_frame: t,
            goal_frame: n - 1,
            sub_task_index: index,
            label: traj.sub_instructions[index as usize - 1].clone(),
        });
    }
    Ok(out)
}
