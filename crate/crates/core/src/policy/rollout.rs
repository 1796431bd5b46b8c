//! Episode execution shared by training, evaluation and logging.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::Observation;
use super::PolicyError;
use crate::env::{
    Action, CellIndex, DistanceField, EnvError, Episode, GridMap, Heading, NavEnv, Pose, Position, TerminationReason,
    FORWARD_STEP_M, NUM_HEADINGS,
};
use crate::hier::bridge::HISTORY_LEN;
use crate::hier::{HierController, Plan, PlanContext, PlanToken, PlannerEvent};
use crate::metrics::EpisodeResult;
use crate::reward::{RewardBreakdown, RewardConfig, RewardEngine, StepObservation, VoxelKey};
use crate::scalar::Scalar;

/// Episodes with their maps and goal-rooted distance fields.
#[derive(Debug, Clone)]
pub struct EpisodePool {
    maps: Vec<Arc<GridMap>>,
    episodes: Vec<Episode>,
    map_of: Vec<usize>,
    fields: Vec<Arc<DistanceField>>,
}

impl EpisodePool {
    /// `episode.map_ref` must name one of `maps`.
    pub fn new(maps: Vec<Arc<GridMap>>, episodes: Vec<Episode>) -> Result<Self, EnvError> {
        let mut cache: HashMap<(usize, CellIndex), Arc<DistanceField>> = HashMap::new();
        let mut map_of = Vec::with_capacity(episodes.len());
        let mut fields = Vec::with_capacity(episodes.len());
        for (i, ep) in episodes.iter().enumerate() {
            let m = maps.iter().position(|m| m.name() == ep.map_ref).ok_or_else(|| EnvError::EpisodeFormat {
                line: i + 1,
                msg: format!("unknown map {:?}", ep.map_ref),
            })?;
            let map = &maps[m];
            let goal = ep.goal.position();
            let cell = map.cell_at(goal).ok_or(EnvError::OutOfBounds { x: goal.x, y: goal.y })?;
            let field = match cache.get(&(m, cell)) {
                Some(f) => f.clone(),
                None => {
                    let f = Arc::new(DistanceField::from_position(map, goal)?);
                    cache.insert((m, cell), f.clone());
                    f
                }
            };
            map_of.push(m);
            fields.push(field);
        }
        Ok(Self { maps, episodes, map_of, fields })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn maps(&self) -> &[Arc<GridMap>] {
        &self.maps
    }

    pub fn get(&self, i: usize) -> (Arc<GridMap>, &Episode, Arc<DistanceField>) {
        (self.maps[self.map_of[i]].clone(), &self.episodes[i], self.fields[i].clone())
    }
}

/// Everything that happened in one environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based index of this step within the episode.
    pub step: u32,
    pub action: Action,
    pub pose_before: Pose,
    pub pose: Pose,
    pub collided: bool,
    /// Geodesic distance after the step, meters.
    pub d: f64,
    /// View-angle difference after the step, degrees.
    pub alpha_deg: f64,
    pub reward: RewardBreakdown<f64>,
    pub revisited: bool,
    pub voxel: VoxelKey,
    pub step_len: f64,
    pub plan_token: PlanToken,
    /// Step at which the plan in force was issued.
    pub plan_step: u32,
    pub waypoint: Option<Position>,
    pub wsp_enabled: bool,
    pub done: bool,
    pub success: bool,
    pub termination: TerminationReason,
}

/// One environment with its reward engine and planner schedule.
pub struct EpisodeRunner {
    env: NavEnv,
    reward: RewardEngine<f64>,
    reward_cfg: RewardConfig<f64>,
    hier: HierController,
    history: VecDeque<Pose>,
    prev_action: Option<Action>,
    traveled: f64,
    revisit_steps: u32,
    success: bool,
    events: Vec<PlannerEvent>,
    /// Step for which the planner has already been consulted.
    planned_at: Option<u32>,
}

impl EpisodeRunner {
    pub fn new(
        map: Arc<GridMap>,
        episode: Episode,
        field: Arc<DistanceField>,
        hier: HierController,
        reward_cfg: RewardConfig<f64>,
    ) -> Result<Self, PolicyError> {
        reward_cfg.validate()?;
        let env = NavEnv::new(map, episode, field)?;
        let reward = Self::engine(&env, reward_cfg)?;
        let mut r = Self {
            env,
            reward,
            reward_cfg,
            hier,
            history: VecDeque::with_capacity(HISTORY_LEN),
            prev_action: None,
            traveled: 0.0,
            revisit_steps: 0,
            success: false,
            events: Vec::new(),
            planned_at: None,
        };
        r.history.push_back(r.env.pose());
        Ok(r)
    }

    fn engine(env: &NavEnv, cfg: RewardConfig<f64>) -> Result<RewardEngine<f64>, PolicyError> {
        let d0 = env.distance_to_goal();
        if !d0.is_finite() {
            return Err(PolicyError::UnreachableStart(env.episode().id.clone()));
        }
        Ok(RewardEngine::new(cfg, d0, env.view_angle(), env.pose().position().to_3d())?)
    }

    /// Start a new episode, keeping the planner and reward settings.
    pub fn reset(&mut self, map: Arc<GridMap>, episode: Episode, field: Arc<DistanceField>) -> Result<(), PolicyError> {
        self.env = NavEnv::new(map, episode, field)?;
        self.reward = Self::engine(&self.env, self.reward_cfg)?;
        self.hier.reset();
        self.history.clear();
        self.history.push_back(self.env.pose());
        self.prev_action = None;
        self.traveled = 0.0;
        self.revisit_steps = 0;
        self.success = false;
        self.events.clear();
        self.planned_at = None;
        Ok(())
    }

    pub fn env(&self) -> &NavEnv {
        &self.env
    }

    pub fn is_done(&self) -> bool {
        self.env.is_done()
    }

    /// Takes effect from the next step on.
    pub fn set_wsp_enabled(&mut self, on: bool) {
        self.reward_cfg.wsp_enabled = on;
        self.reward.set_wsp_enabled(on);
    }

    pub fn reward_engine(&self) -> &RewardEngine<f64> {
        &self.reward
    }

    pub fn events(&self) -> &[PlannerEvent] {
        &self.events
    }

    /// Plan in force for the upcoming step, consulting the planner when due.
    /// Repeated calls within one step do not consult it again.
    pub fn plan(&mut self) -> Result<Plan, PolicyError> {
        if self.planned_at == Some(self.env.steps()) {
            return Ok(self.hier.current().expect("planned this step").clone());
        }
        let history: Vec<Pose> = self.history.iter().copied().collect();
        let ep = self.env.episode();
        let ctx = PlanContext {
            episode_id: &ep.id,
            step: self.env.steps(),
            map: self.env.map(),
            field: self.env.field(),
            pose: self.env.pose(),
            goal: ep.goal,
            history: &history,
        };
        let plan = self.hier.plan_for(&ctx)?.clone();
        self.events.extend(self.hier.take_events());
        self.planned_at = Some(self.env.steps());
        Ok(plan)
    }

    /// Fused features for the upcoming step.
    pub fn features_into<S: Scalar>(&mut self, out: &mut [S]) -> Result<(), PolicyError> {
        let plan = self.plan()?;
        let pose = self.env.pose();
        let obs = Observation {
            patch: self.env.map().ego_patch(pose.position(), f64::from(pose.heading.degrees())),
            pose,
            goal: self.env.episode().goal.position(),
            geodesic_m: self.env.distance_to_goal(),
            plan: &plan,
            step: self.env.steps(),
            k: self.hier.k(),
            prev_action: self.prev_action,
        };
        obs.features_into(out);
        Ok(())
    }

    /// Apply `action` under the plan in force for this step.
    pub fn apply(&mut self, action: Action) -> Result<StepRecord, PolicyError> {
        let plan = self.plan()?;
        let before = self.env.pose();
        let out = self.env.step(action);
        let pose = out.new_pose;
        let d_raw = self.env.distance_at(pose.position());
        // a pose the lattice cannot reach from the goal keeps the last distance
        let d = if d_raw.is_finite() { d_raw } else { self.reward.state().d_prev };
        let alpha = self.env.view_angle();
        let stopped = action == Action::Stop;
        let rs = self.reward.step(StepObservation {
            d_t: d,
            alpha_t_deg: alpha,
            position: pose.position().to_3d(),
            stopped,
        })?;
        self.traveled += rs.wsp.step_len;
        if rs.wsp.revisited {
            self.revisit_steps += 1;
        }
        self.success = stopped && d <= self.reward_cfg.d_s;
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(pose);
        self.prev_action = Some(action);
        Ok(StepRecord {
            step: self.env.steps(),
            action,
            pose_before: before,
            pose,
            collided: out.collided,
            d,
            alpha_deg: alpha,
            reward: rs.breakdown,
            revisited: rs.wsp.revisited,
            voxel: rs.wsp.voxel,
            step_len: rs.wsp.step_len,
            plan_token: plan.token,
            plan_step: plan.issued_at_step,
            waypoint: plan.waypoint,
            wsp_enabled: self.reward_cfg.wsp_enabled,
            done: out.terminated,
            success: self.success,
            termination: out.termination_reason,
        })
    }

    pub fn result(&self) -> EpisodeResult<f64> {
        let ep = self.env.episode();
        EpisodeResult {
            episode_id: ep.id.clone(),
            success: self.success,
            shortest: ep.shortest_path_length,
            traveled: self.traveled,
            steps: self.env.steps(),
            revisit_steps: self.revisit_steps,
            planner_calls: self.hier.planner_calls(),
            difficulty: ep.difficulty,
        }
    }
}

/// Scripted baseline: face the heading whose forward step lowers the
/// geodesic distance most, step, and stop well inside the success radius.
pub fn oracle_greedy_action(map: &GridMap, field: &DistanceField, pose: Pose, stop_radius: f64) -> Action {
    let here = pose.position();
    let d = field.at(map, here).meters();
    if d <= stop_radius * 0.75 || !d.is_finite() {
        return Action::Stop;
    }
    let mut best: Option<(f64, Heading)> = None;
    for i in 0..NUM_HEADINGS {
        let h = Heading::from_index(i);
        let (ux, uy) = h.unit();
        let next = Position::new(here.x + FORWARD_STEP_M * ux, here.y + FORWARD_STEP_M * uy);
        if !map.segment_is_free(here, next) {
            continue;
        }
        let dn = field.at(map, next).meters();
        // strict improvement keeps the lowest index among ties
        if best.map_or(true, |(bd, _)| dn < bd) {
            best = Some((dn, h));
        }
    }
    let Some((_, want)) = best else { return Action::Stop };
    if want == pose.heading {
        return Action::MoveForward;
    }
    let left_turns = (want.index() + NUM_HEADINGS - pose.heading.index()) % NUM_HEADINGS;
    if left_turns <= NUM_HEADINGS / 2 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}
