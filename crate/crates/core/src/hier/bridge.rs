//! Subprocess planner speaking newline-delimited JSON on stdin/stdout.
//!
//! One request line per planning call, one response line back. A response
//! that arrives after its deadline is discarded when the next request is
//! answered, so every answer is matched to the request that produced it.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{HierError, Plan, PlanContext, PlanToken, Planner};
use crate::env::{Pose, Position};

/// Number of recent poses sent to the planner.
pub const HISTORY_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceBand {
    /// `< 1 m`
    Near,
    /// `[1, 3) m`
    Mid,
    /// `[3, 5) m`
    Far,
    /// `>= 5 m`
    VeryFar,
    Unknown,
}

impl DistanceBand {
    pub fn from_meters(d: f64) -> Self {
        match d {
            d if !d.is_finite() || d < 0.0 => DistanceBand::Unknown,
            d if d < 1.0 => DistanceBand::Near,
            d if d < 3.0 => DistanceBand::Mid,
            d if d < 5.0 => DistanceBand::Far,
            _ => DistanceBand::VeryFar,
        }
    }
}

/// Octant `0..8` of the goal bearing relative to the heading; 0 is straight
/// ahead and indices grow counterclockwise. Each octant is centered on its
/// direction, so octant 0 covers `(-22.5, 22.5]` degrees.
pub fn bearing_octant(pose: &Pose, goal: Position) -> Option<u8> {
    let (dx, dy) = (goal.x - pose.x, goal.y - pose.y);
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    let rel = dy.atan2(dx).to_degrees() - f64::from(pose.heading.degrees());
    let rel = (rel + 22.5).rem_euclid(360.0);
    Some(((rel / 45.0).floor() as u8).min(7))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRequest {
    pub episode_id: String,
    pub step: u32,
    /// Row-major egocentric occupancy, 1 = blocked.
    pub patch: Vec<u8>,
    pub goal_bearing_octant: Option<u8>,
    pub goal_distance_band: DistanceBand,
    /// `[x, y, heading_deg]`, oldest first.
    pub history: Vec<[f64; 3]>,
}

impl PlannerRequest {
    pub fn from_context(ctx: &PlanContext<'_>) -> Self {
        let pos = ctx.pose.position();
        let patch = ctx.map.ego_patch(pos, f64::from(ctx.pose.heading.degrees())).to_vec();
        let d = ctx.field.at(ctx.map, pos);
        let (octant, band) = if d.is_reachable() {
            (bearing_octant(&ctx.pose, ctx.goal.position()), DistanceBand::from_meters(d.meters()))
        } else {
            (None, DistanceBand::Unknown)
        };
        let skip = ctx.history.len().saturating_sub(HISTORY_LEN);
        let history = ctx.history[skip..]
            .iter()
            .map(|p| [p.x, p.y, f64::from(p.heading.degrees())])
            .collect();
        Self {
            episode_id: ctx.episode_id.to_string(),
            step: ctx.step,
            patch,
            goal_bearing_octant: octant,
            goal_distance_band: band,
            history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerResponse {
    pub token: PlanToken,
    #[serde(default)]
    pub waypoint: Option<[f64; 2]>,
    #[serde(default)]
    pub text: String,
}

impl PlannerResponse {
    pub fn decode(line: &str) -> Result<Self, HierError> {
        let r: PlannerResponse =
            serde_json::from_str(line.trim()).map_err(|e| HierError::ProtocolError(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), HierError> {
        if let Some([x, y]) = self.waypoint {
            if !x.is_finite() || !y.is_finite() {
                return Err(HierError::ProtocolError("waypoint must be finite".into()));
            }
        } else if self.token.requires_waypoint() {
            return Err(HierError::ProtocolError(format!("{} requires a waypoint", self.token)));
        }
        Ok(())
    }

    pub fn to_plan(&self, step: u32) -> Plan {
        Plan {
            token: self.token,
            waypoint: self.waypoint.map(|[x, y]| Position::new(x, y)),
            heading_hint: None,
            issued_at_step: step,
            text: self.text.clone(),
        }
    }
}

/// External planner process started with `sh -c <command>`.
pub struct BridgePlanner {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    /// Responses still owed for requests that timed out.
    stale: usize,
}

impl BridgePlanner {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, HierError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines: rx, timeout, stale: 0 })
    }

    /// Send one request and wait for its response line.
    pub fn request(&mut self, req: &PlannerRequest) -> Result<PlannerResponse, HierError> {
        let stdin = self.stdin.as_mut().ok_or(HierError::ProcessExited)?;
        let mut line = serde_json::to_string(req).map_err(|e| HierError::ProtocolError(e.to_string()))?;
        line.push('\n');
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
            return Err(if e.kind() == std::io::ErrorKind::BrokenPipe { HierError::ProcessExited } else { e.into() });
        }
        let deadline = std::time::Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(text)) => {
                    if self.stale > 0 {
                        self.stale -= 1;
                        continue;
                    }
                    return PlannerResponse::decode(&text);
                }
                Ok(Err(e)) => return Err(e.into()),
                Err(RecvTimeoutError::Timeout) => {
                    self.stale += 1;
                    return Err(HierError::PlannerTimeout(self.timeout.as_millis() as u64));
                }
                Err(RecvTimeoutError::Disconnected) => return Err(HierError::ProcessExited),
            }
        }
    }
}

impl Planner for BridgePlanner {
    fn plan(&mut self, ctx: &PlanContext<'_>) -> Result<Plan, HierError> {
        let resp = self.request(&PlannerRequest::from_context(ctx))?;
        Ok(resp.to_plan(ctx.step))
    }
}

impl Drop for BridgePlanner {
    fn drop(&mut self) {
        // closing stdin lets well-behaved planners exit on EOF
        self.stdin.take();
        if matches!(self.child.try_wait(), Ok(None)) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
