//! Fast-slow scheduling: a slow planner refreshes a short-horizon [`Plan`]
//! every `k` steps and the fast executor consumes it on every step.

pub mod bridge;
pub mod planners;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DistanceField, GridMap, Pose, Position};
use crate::scalar::Scalar;

pub use bridge::{BridgePlanner, DistanceBand, PlannerRequest, PlannerResponse};
pub use planners::{DelayedPlanner, NullPlanner, OracleConfig, OraclePlanner, ScriptedPlanner};

#[derive(Debug, Error)]
pub enum HierError {
    #[error("goal is unreachable from the current pose")]
    Unreachable,
    #[error("planner protocol error: {0}")]
    ProtocolError(String),
    #[error("planner did not answer within {0} ms")]
    PlannerTimeout(u64),
    #[error("planner process exited")]
    ProcessExited,
    #[error("planner io: {0}")]
    Io(#[from] std::io::Error),
    #[error("planning interval must be at least 1")]
    ZeroInterval,
}

/// Discrete surrogate of a natural-language sub-task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanToken {
    GoToWaypoint,
    ExitRoom,
    FollowCorridor,
    ApproachGoal,
    Explore,
    StopNearGoal,
}

impl PlanToken {
    pub const ALL: [PlanToken; 6] = [
        PlanToken::GoToWaypoint,
        PlanToken::ExitRoom,
        PlanToken::FollowCorridor,
        PlanToken::ApproachGoal,
        PlanToken::Explore,
        PlanToken::StopNearGoal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn requires_waypoint(self) -> bool {
        matches!(self, PlanToken::GoToWaypoint | PlanToken::ExitRoom)
    }
}

impl fmt::Display for PlanToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub token: PlanToken,
    pub waypoint: Option<Position>,
    pub heading_hint: Option<f64>,
    pub issued_at_step: u32,
    pub text: String,
}

impl Plan {
    pub fn explore(step: u32) -> Self {
        Self {
            token: PlanToken::Explore,
            waypoint: None,
            heading_hint: None,
            issued_at_step: step,
            text: "explore".into(),
        }
    }
}

/// What a planner may look at when asked for a plan.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub episode_id: &'a str,
    pub step: u32,
    pub map: &'a GridMap,
    /// Distance field rooted at the goal; only the oracle reads it directly.
    pub field: &'a DistanceField,
    pub pose: Pose,
    pub goal: Pose,
    /// Most recent poses, oldest first, current pose last.
    pub history: &'a [Pose],
}

pub trait Planner: Send {
    fn plan(&mut self, ctx: &PlanContext<'_>) -> Result<Plan, HierError>;
}

/// Whether the slow planner runs at `step`.
pub fn should_plan(step: u32, k: u32) -> bool {
    assert!(k >= 1, "planning interval must be at least 1");
    step % k == 0
}

/// Width of [`plan_feature`].
pub const PLAN_FEATURE_WIDTH: usize = 10;
/// Waypoint range saturates here so bridge planners cannot blow up inputs.
pub const MAX_WAYPOINT_RANGE_M: f64 = 10.0;

/// Fixed-width encoding: token one-hot (6), waypoint range and bearing
/// `sin`/`cos` relative to the heading (3, zeros without a waypoint), and
/// plan age over `k` (1).
pub fn plan_feature<S: Scalar>(plan: &Plan, pose: &Pose, step: u32, k: u32) -> [S; PLAN_FEATURE_WIDTH] {
    let mut out = [S::zero(); PLAN_FEATURE_WIDTH];
    out[plan.token.index()] = S::one();
    if let Some(w) = plan.waypoint {
        let (dx, dy) = (w.x - pose.x, w.y - pose.y);
        let range = dx.hypot(dy).min(MAX_WAYPOINT_RANGE_M);
        if range > 0.0 {
            let bearing = dy.atan2(dx) - (pose.heading.degrees() as f64).to_radians();
            out[6] = S::lit(range);
            out[7] = S::lit(bearing.sin());
            out[8] = S::lit(bearing.cos());
        }
    }
    let age = step.saturating_sub(plan.issued_at_step);
    out[9] = S::lit(f64::from(age) / f64::from(k.max(1)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerSpec {
    Oracle {
        #[serde(default)]
        config: OracleConfig,
    },
    Null,
    Scripted {
        path: String,
    },
    Bridge {
        command: String,
        #[serde(default = "default_bridge_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_bridge_timeout_ms() -> u64 {
    5_000
}

impl Default for PlannerSpec {
    fn default() -> Self {
        PlannerSpec::Oracle { config: OracleConfig::default() }
    }
}

impl PlannerSpec {
    pub fn build(&self) -> Result<Box<dyn Planner>, HierError> {
        Ok(match self {
            PlannerSpec::Oracle { config } => Box::new(OraclePlanner::new(config.clone())),
            PlannerSpec::Null => Box::new(NullPlanner),
            PlannerSpec::Scripted { path } => Box::new(ScriptedPlanner::from_file(path)?),
            PlannerSpec::Bridge { command, timeout_ms } => {
                Box::new(BridgePlanner::spawn(command, std::time::Duration::from_millis(*timeout_ms))?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierConfig {
    pub k: u32,
    pub planner: PlannerSpec,
}

impl Default for HierConfig {
    fn default() -> Self {
        Self { k: 15, planner: PlannerSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlannerEventKind {
    Timeout,
    Protocol(String),
}

/// Recoverable planner failure; the previous plan stayed in force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerEvent {
    pub step: u32,
    pub kind: PlannerEventKind,
}

/// Runs the planner on `k`-boundaries and holds the plan in between.
pub struct HierController {
    k: u32,
    planner: Box<dyn Planner>,
    current: Option<Plan>,
    events: Vec<PlannerEvent>,
    calls: u32,
}

impl HierController {
    pub fn new(k: u32, planner: Box<dyn Planner>) -> Result<Self, HierError> {
        if k == 0 {
            return Err(HierError::ZeroInterval);
        }
        Ok(Self { k, planner, current: None, events: Vec::new(), calls: 0 })
    }

    pub fn from_config(cfg: &HierConfig) -> Result<Self, HierError> {
        Self::new(cfg.k, cfg.planner.build()?)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Forget the current plan; call at episode boundaries.
    pub fn reset(&mut self) {
        self.current = None;
        self.calls = 0;
    }

    pub fn planner_calls(&self) -> u32 {
        self.calls
    }

    pub fn events(&self) -> &[PlannerEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<PlannerEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn current(&self) -> Option<&Plan> {
        self.current.as_ref()
    }

    /// Plan in force at `ctx.step`, invoking the planner when due.
    ///
    /// Timeouts and malformed responses keep the previous plan (or fall back
    /// to `Explore` on the first call) and are recorded as events; a dead
    /// planner process is an error.
    pub fn plan_for(&mut self, ctx: &PlanContext<'_>) -> Result<&Plan, HierError> {
        if should_plan(ctx.step, self.k) || self.current.is_none() {
            self.calls += 1;
            match self.planner.plan(ctx) {
                Ok(mut plan) => {
                    plan.issued_at_step = ctx.step;
                    self.current = Some(plan);
                }
                Err(err @ (HierError::PlannerTimeout(_) | HierError::ProtocolError(_))) => {
                    let kind = match err {
                        HierError::PlannerTimeout(_) => PlannerEventKind::Timeout,
                        other => PlannerEventKind::Protocol(other.to_string()),
                    };
                    self.events.push(PlannerEvent { step: ctx.step, kind });
                    if self.current.is_none() {
                        self.current = Some(Plan::explore(ctx.step - ctx.step % self.k));
                    }
                }
                Err(err) => return Err(err),
            }
        }
        Ok(self.current.as_ref().expect("plan set above"))
    }
}
