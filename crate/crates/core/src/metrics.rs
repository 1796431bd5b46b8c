//! Navigation metrics: SR, SPL, stratified reports, wandering diagnostics and
//! the planner latency amortization model.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Difficulty};
use crate::reward::VoxelKey;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("result set is empty")]
    EmptyResultSet,
    #[error("episode {0} has a non-positive shortest path length")]
    ZeroShortestPath(String),
    #[error("planning interval must be at least 1")]
    ZeroInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult<S> {
    pub episode_id: String,
    pub success: bool,
    /// Shortest path length `l_i`, meters.
    pub shortest: S,
    /// Travelled length `p_i`, meters; collisions add nothing.
    pub traveled: S,
    pub steps: u32,
    pub revisit_steps: u32,
    pub planner_calls: u32,
    pub difficulty: Difficulty,
}

/// Mean of the success indicators.
pub fn sr<S: Scalar>(results: &[EpisodeResult<S>]) -> Result<S, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResultSet);
    }
    let hits = results.iter().filter(|r| r.success).count();
    Ok(S::lit(hits as f64) / S::lit(results.len() as f64))
}

/// `(1/N) sum_i S_i l_i / max(p_i, l_i)`.
pub fn spl<S: Scalar>(results: &[EpisodeResult<S>]) -> Result<S, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResultSet);
    }
    let mut acc = S::zero();
    for r in results {
        if !(r.shortest > S::zero()) {
            return Err(MetricsError::ZeroShortestPath(r.episode_id.clone()));
        }
        if r.success {
            acc += r.shortest / r.traveled.max(r.shortest);
        }
    }
    Ok(acc / S::lit(results.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumStats<S> {
    pub n: usize,
    pub sr: S,
    pub spl: S,
}

/// Per-difficulty metrics plus the pooled overall.
///
/// `overall` pools every episode; `macro_mean` averages the stratum values
/// and differs from the pooled figure whenever strata have unequal sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport<S> {
    pub strata: BTreeMap<Difficulty, StratumStats<S>>,
    pub overall: StratumStats<S>,
    pub macro_mean: StratumStats<S>,
}

pub fn stratified_report<S: Scalar>(results: &[EpisodeResult<S>]) -> Result<StratifiedReport<S>, MetricsError> {
    let overall = StratumStats { n: results.len(), sr: sr(results)?, spl: spl(results)? };
    let mut strata = BTreeMap::new();
    for d in Difficulty::ALL {
        let group: Vec<_> = results.iter().filter(|r| r.difficulty == d).cloned().collect();
        if group.is_empty() {
            continue;
        }
        strata.insert(d, StratumStats { n: group.len(), sr: sr(&group)?, spl: spl(&group)? });
    }
    let k = S::lit(strata.len() as f64);
    let macro_mean = StratumStats {
        n: results.len(),
        sr: strata.values().map(|s| s.sr).sum::<S>() / k,
        spl: strata.values().map(|s| s.spl).sum::<S>() / k,
    };
    Ok(StratifiedReport { strata, overall, macro_mean })
}

/// Planner amortization model and measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub t_fast_ms: f64,
    pub t_slow_ms: f64,
    pub k: u32,
    pub measured_avg_ms: f64,
    pub fps: f64,
}

impl LatencyProfile {
    pub fn new(t_fast_ms: f64, t_slow_ms: f64, k: u32, measured_avg_ms: f64) -> Self {
        Self { t_fast_ms, t_slow_ms, k, measured_avg_ms, fps: 1000.0 / measured_avg_ms }
    }

    pub fn model_ms(&self) -> f64 {
        amortized_latency(self.t_fast_ms, self.t_slow_ms, self.k).unwrap_or(f64::NAN)
    }

    /// Measured minus model: overhead the model does not account for.
    pub fn residual_ms(&self) -> f64 {
        self.measured_avg_ms - self.model_ms()
    }
}

/// `t_fast + t_slow / k`.
pub fn amortized_latency(t_fast_ms: f64, t_slow_ms: f64, k: u32) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroInterval);
    }
    Ok(t_fast_ms + t_slow_ms / f64::from(k))
}

/// One step of a trajectory as needed by the wandering diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub action: Action,
    pub voxel: VoxelKey,
    pub revisit: bool,
    pub step_len: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WanderingDiagnostics {
    pub revisit_rate: f64,
    pub path_ratio: f64,
    pub oscillation_count: u32,
}

/// Revisit rate, `p/l` and heading reversals (left-right-left or
/// right-left-right over three consecutive steps).
pub fn wandering_diagnostics(steps: &[TrajectoryStep], shortest: f64) -> WanderingDiagnostics {
    let n = steps.len();
    let revisits = steps.iter().filter(|s| s.revisit).count();
    let traveled: f64 = steps.iter().map(|s| s.step_len).sum();
    let oscillation_count = steps
        .windows(3)
        .filter(|w| {
            matches!(
                (w[0].action, w[1].action, w[2].action),
                (Action::TurnLeft, Action::TurnRight, Action::TurnLeft)
                    | (Action::TurnRight, Action::TurnLeft, Action::TurnRight)
            )
        })
        .count() as u32;
    WanderingDiagnostics {
        revisit_rate: if n == 0 { 0.0 } else { revisits as f64 / n as f64 },
        path_ratio: if shortest > 0.0 { traveled / shortest } else { f64::NAN },
        oscillation_count,
    }
}

/// Count steps that re-enter a previously visited voxel other than the
/// current one, recomputed from raw voxel keys.
pub fn count_reentries(start: VoxelKey, voxels: impl IntoIterator<Item = VoxelKey>) -> u32 {
    let mut seen = HashSet::from([start]);
    let mut last = start;
    let mut n = 0;
    for v in voxels {
        if v != last && seen.contains(&v) {
            n += 1;
        }
        seen.insert(v);
        last = v;
    }
    n
}
