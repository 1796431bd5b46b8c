//! Deterministic 2-D navigation environment with discrete actions.
//!
//! The agent is a disc of radius `agent_radius` moving on a [`GridMap`].
//! `MoveForward` translates by 0.25 m along the heading when the swept
//! segment stays in inflated-free space, otherwise the step is a collision
//! and the pose is left untouched. Turns rotate by 30 degrees in place.
//! Headings are measured from +x toward +y; `TurnLeft` increases them.

pub mod episode;
pub mod geodesic;
pub mod map;
pub mod suite;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use episode::{read_episodes, sample_episodes, write_episodes, Difficulty, Episode};
pub use geodesic::{geodesic_distance, DistanceField, Geodesic};
pub use suite::{builtin_map, desk_suite, BUILTIN_MAPS, DESK_SUITE};
pub use map::{load_map, Cell, CellIndex, GridMap, MapMeta, PATCH_SIZE, PATCH_SPACING_M};

/// Forward displacement of one `MoveForward`, meters.
pub const FORWARD_STEP_M: f64 = 0.25;
/// Rotation of one turn action, degrees.
pub const TURN_DEG: u16 = 30;
/// Number of distinct headings.
pub const NUM_HEADINGS: u8 = 12;
/// Default episode step budget.
pub const DEFAULT_MAX_STEPS: u32 = 500;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("map has no cells")]
    EmptyMap,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("unknown glyph {glyph:?} at row {row}, column {col}")]
    UnknownGlyph { row: usize, col: usize, glyph: char },
    #[error("invalid map metadata: {0}")]
    InvalidMeta(String),
    #[error("cell ({row}, {col}) is not free after inflation")]
    PositionInObstacle { row: usize, col: usize },
    #[error("position ({x}, {y}) lies outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("goal view list is empty")]
    EmptyViews,
    #[error("heading {0} is not a multiple of 30 degrees")]
    InvalidHeading(i64),
    #[error("no start/goal pair found for stratum {0} after {1} attempts")]
    StratumUnsatisfiable(Difficulty, usize),
    #[error("map needs at least two free cells, found {0}")]
    TooFewFreeCells(usize),
    #[error("episode file line {line}: {msg}")]
    EpisodeFormat { line: usize, msg: String },
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Lift to 3-D with `z = 0`, as used for voxel keys.
    pub fn to_3d(self) -> [f64; 3] {
        [self.x, self.y, 0.0]
    }
}

/// Heading restricted to multiples of 30 degrees, stored as the multiple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Heading(u8);

impl Heading {
    pub fn from_degrees(deg: i64) -> Result<Self, EnvError> {
        if deg.rem_euclid(TURN_DEG as i64) != 0 {
            return Err(EnvError::InvalidHeading(deg));
        }
        Ok(Self((deg.rem_euclid(360) / TURN_DEG as i64) as u8))
    }

    pub fn from_index(idx: u8) -> Self {
        Self(idx % NUM_HEADINGS)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn degrees(self) -> u16 {
        self.0 as u16 * TURN_DEG
    }

    pub fn left(self) -> Self {
        Self((self.0 + 1) % NUM_HEADINGS)
    }

    pub fn right(self) -> Self {
        Self((self.0 + NUM_HEADINGS - 1) % NUM_HEADINGS)
    }

    /// Unit vector along the heading.
    pub fn unit(self) -> (f64, f64) {
        let (s, c) = (self.degrees() as f64).to_radians().sin_cos();
        (c, s)
    }
}

impl Serialize for Heading {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u16(self.degrees())
    }
}

impl<'de> Deserialize<'de> for Heading {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let deg = i64::deserialize(d)?;
        Heading::from_degrees(deg).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: Heading,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: Heading) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::MoveForward, Action::TurnLeft, Action::TurnRight, Action::Stop];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        match self {
            Action::MoveForward => 0,
            Action::TurnLeft => 1,
            Action::TurnRight => 2,
            Action::Stop => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    Stopped,
    MaxSteps,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub new_pose: Pose,
    pub collided: bool,
    pub terminated: bool,
    pub termination_reason: TerminationReason,
}

/// Transition function.
///
/// `step_index` is the 1-based index of the step being taken; the episode
/// terminates when it reaches `max_steps` or the action is `Stop`.
pub fn step(map: &GridMap, pose: Pose, action: Action, step_index: u32, max_steps: u32) -> StepOutcome {
    let mut new_pose = pose;
    let mut collided = false;
    match action {
        Action::TurnLeft => new_pose.heading = pose.heading.left(),
        Action::TurnRight => new_pose.heading = pose.heading.right(),
        Action::MoveForward => {
            let (ux, uy) = pose.heading.unit();
            let target = Position::new(pose.x + FORWARD_STEP_M * ux, pose.y + FORWARD_STEP_M * uy);
            if map.segment_is_free(pose.position(), target) {
                new_pose.x = target.x;
                new_pose.y = target.y;
            } else {
                collided = true;
            }
        }
        Action::Stop => {}
    }
    let termination_reason = if action == Action::Stop {
        TerminationReason::Stopped
    } else if step_index >= max_steps {
        TerminationReason::MaxSteps
    } else {
        TerminationReason::None
    };
    StepOutcome {
        new_pose,
        collided,
        terminated: termination_reason != TerminationReason::None,
        termination_reason,
    }
}

/// Smallest wrapped absolute difference between `heading` and any goal view,
/// in degrees within `[0, 180]`.
pub fn view_angle_diff(heading_deg: f64, goal_views: &[f64]) -> Result<f64, EnvError> {
    goal_views
        .iter()
        .map(|&v| {
            let d = (heading_deg - v).rem_euclid(360.0);
            d.min(360.0 - d)
        })
        .min_by(f64::total_cmp)
        .ok_or(EnvError::EmptyViews)
}

/// Stateful wrapper: one episode on one map, with a cached distance field.
#[derive(Debug, Clone)]
pub struct NavEnv {
    map: Arc<GridMap>,
    episode: Episode,
    field: Arc<DistanceField>,
    goal_views: Vec<f64>,
    pose: Pose,
    steps: u32,
    done: bool,
}

impl NavEnv {
    pub fn new(map: Arc<GridMap>, episode: Episode, field: Arc<DistanceField>) -> Result<Self, EnvError> {
        if episode.goal_views.is_empty() {
            return Err(EnvError::EmptyViews);
        }
        let goal_views = episode.goal_views.iter().map(|h| h.degrees() as f64).collect();
        let pose = episode.start;
        Ok(Self { map, episode, field, goal_views, pose, steps: 0, done: false })
    }

    /// Build with a freshly computed distance field rooted at the goal.
    pub fn with_map(map: Arc<GridMap>, episode: Episode) -> Result<Self, EnvError> {
        let field = Arc::new(DistanceField::from_position(&map, episode.goal.position())?);
        Self::new(map, episode, field)
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn field(&self) -> &Arc<DistanceField> {
        &self.field
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn goal_views(&self) -> &[f64] {
        &self.goal_views
    }

    /// Geodesic distance to the goal from the current pose.
    pub fn distance_to_goal(&self) -> f64 {
        self.field.at(&self.map, self.pose.position()).meters()
    }

    pub fn distance_at(&self, p: Position) -> f64 {
        self.field.at(&self.map, p).meters()
    }

    /// View-angle difference to the closest goal view, degrees.
    pub fn view_angle(&self) -> f64 {
        view_angle_diff(self.pose.heading.degrees() as f64, &self.goal_views).expect("non-empty views")
    }

    pub fn step(&mut self, action: Action) -> StepOutcome {
        assert!(!self.done, "step called on a finished episode");
        self.steps += 1;
        let out = step(&self.map, self.pose, action, self.steps, self.episode.max_steps);
        self.pose = out.new_pose;
        self.done = out.terminated;
        out
    }
}
