//! In-process planners: map oracle, null baseline, scripted replay and a
//! delay wrapper used by the latency harness.

use std::io::BufRead;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::bridge::PlannerResponse;
use super::{HierError, Plan, PlanContext, PlanToken, Planner};
use crate::env::Position;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Path-length budget for the waypoint, meters.
    pub lookahead_m: f64,
    /// Below this geodesic distance the oracle says `StopNearGoal`.
    pub stop_radius_m: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { lookahead_m: 2.0, stop_radius_m: 1.0 }
    }
}

/// Planner with full map access: waypoints lie on the geodesic shortest path.
#[derive(Debug, Clone, Default)]
pub struct OraclePlanner {
    cfg: OracleConfig,
}

impl OraclePlanner {
    pub fn new(cfg: OracleConfig) -> Self {
        Self { cfg }
    }

    /// Shortest path from the pose to the goal as world points; the first
    /// point is the pose itself, the last is the goal.
    pub fn shortest_path(ctx: &PlanContext<'_>) -> Result<Vec<Position>, HierError> {
        let cell = ctx.map.cell_at(ctx.pose.position()).ok_or(HierError::Unreachable)?;
        let cells = ctx.field.descend(ctx.map, cell).ok_or(HierError::Unreachable)?;
        let mut pts = Vec::with_capacity(cells.len() + 1);
        pts.push(ctx.pose.position());
        pts.extend(cells.iter().skip(1).map(|&c| ctx.map.cell_center(c)));
        let goal = ctx.goal.position();
        if pts.last() != Some(&goal) {
            if cells.len() > 1 {
                pts.pop();
            }
            pts.push(goal);
        }
        Ok(pts)
    }
}

impl Planner for OraclePlanner {
    fn plan(&mut self, ctx: &PlanContext<'_>) -> Result<Plan, HierError> {
        let d = ctx.field.at(ctx.map, ctx.pose.position());
        if !d.is_reachable() {
            return Err(HierError::Unreachable);
        }
        let d = d.meters();
        let goal = ctx.goal.position();
        let heading_hint = Some(ctx.goal.heading.degrees() as f64);
        if d <= self.cfg.stop_radius_m {
            return Ok(Plan {
                token: PlanToken::StopNearGoal,
                waypoint: Some(goal),
                heading_hint,
                issued_at_step: ctx.step,
                text: "stop near the goal".into(),
            });
        }
        if d <= self.cfg.lookahead_m {
            return Ok(Plan {
                token: PlanToken::ApproachGoal,
                waypoint: Some(goal),
                heading_hint,
                issued_at_step: ctx.step,
                text: "approach the goal".into(),
            });
        }
        let path = Self::shortest_path(ctx)?;
        let waypoint = farthest_visible_within(ctx, &path, self.cfg.lookahead_m);
        Ok(Plan {
            token: PlanToken::GoToWaypoint,
            waypoint: Some(waypoint),
            heading_hint: None,
            issued_at_step: ctx.step,
            text: "go to the waypoint".into(),
        })
    }
}

/// Farthest path point whose cumulative path length is within `budget` and
/// that is in line of sight from the pose. Falls back to the next path point.
pub fn farthest_visible_within(ctx: &PlanContext<'_>, path: &[Position], budget: f64) -> Position {
    let origin = path[0];
    let mut cum = 0.0;
    let mut within = Vec::new();
    for w in path.windows(2) {
        cum += w[0].distance(w[1]);
        if cum > budget + 1e-9 {
            break;
        }
        within.push(w[1]);
    }
    within
        .iter()
        .rev()
        .find(|p| ctx.map.segment_is_free(origin, **p))
        .copied()
        .unwrap_or_else(|| path.get(1).copied().unwrap_or(origin))
}

/// Ablation baseline: always `Explore`, never a waypoint.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPlanner;

impl Planner for NullPlanner {
    fn plan(&mut self, ctx: &PlanContext<'_>) -> Result<Plan, HierError> {
        Ok(Plan::explore(ctx.step))
    }
}

/// Replays a fixed list of responses, repeating the last one when exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    responses: Vec<PlannerResponse>,
    next: usize,
}

impl ScriptedPlanner {
    pub fn new(responses: Vec<PlannerResponse>) -> Result<Self, HierError> {
        if responses.is_empty() {
            return Err(HierError::ProtocolError("scripted planner needs at least one response".into()));
        }
        for r in &responses {
            r.validate()?;
        }
        Ok(Self { responses, next: 0 })
    }

    /// Load JSON-lines responses.
    pub fn from_file(path: &str) -> Result<Self, HierError> {
        let file = std::fs::File::open(path)?;
        let mut responses = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            responses.push(PlannerResponse::decode(&line)?);
        }
        Self::new(responses)
    }
}

impl Planner for ScriptedPlanner {
    fn plan(&mut self, ctx: &PlanContext<'_>) -> Result<Plan, HierError> {
        let r = &self.responses[self.next.min(self.responses.len() - 1)];
        self.next += 1;
        Ok(r.to_plan(ctx.step))
    }
}

/// Wraps a planner and sleeps before answering, emulating a slow model.
pub struct DelayedPlanner<P> {
    inner: P,
    delay: Duration,
}

impl<P: Planner> DelayedPlanner<P> {
    pub fn new(inner: P, delay: Duration) -> Self {
        Self { inner, delay }
    }
}

impl<P: Planner> Planner for DelayedPlanner<P> {
    fn plan(&mut self, ctx: &PlanContext<'_>) -> Result<Plan, HierError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.inner.plan(ctx)
    }
}
