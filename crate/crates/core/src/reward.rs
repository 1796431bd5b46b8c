//! Shaped navigation reward with a wandering suppression penalty.
//!
//! Per step the reward is
//!
//! ```text
//! r_t      = (d_{t-1} - d_t) + 1[d_t <= d_s] (a_{t-1} - a_t) - gamma
//! R_s      = 5 (1[d_t <= d_s] + 1[d_t <= d_s and a_t <= a_s])      (Stop step only)
//! r^wsp_t  = -(l_t - l_{t-1}) - dc_t
//! total    = r_t + R_s + lambda_w r^wsp_t
//! ```
//!
//! with `d` the geodesic distance, `a` the view-angle difference in radians,
//! `l` the travelled path length and `dc` the per-step revisit cost. The
//! potential formulation replaces the shaping terms by `Phi_{t-1} - Phi_t`
//! with `Phi = lambda_w (l + C) + d + a`, which drops the `d_t <= d_s` gate on
//! the angle term.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{deg_to_rad, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("voxel resolution must be positive")]
    NonPositiveResolution,
    #[error("components were computed for {found:?}, config expects {expected:?}")]
    FormulationMismatch { expected: Formulation, found: Formulation },
    #[error("invalid reward config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RevisitMode {
    /// Re-entering a visited voxel other than the current one.
    #[default]
    ReentryOnly,
    /// Any step that ends in a visited voxel, including dwelling.
    AnyRepeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Formulation {
    #[default]
    Additive,
    Potential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig<S> {
    /// Success distance, meters.
    pub d_s: S,
    /// Success view angle, degrees.
    pub alpha_s: S,
    /// Slack magnitude; always subtracted.
    pub gamma_slack: S,
    pub lambda_w: S,
    /// Cost per revisit.
    pub lambda_rv: S,
    /// Voxel edge length, meters.
    pub revisit_radius: S,
    pub revisit_mode: RevisitMode,
    pub wsp_enabled: bool,
    pub formulation: Formulation,
}

impl<S: Scalar> Default for RewardConfig<S> {
    fn default() -> Self {
        Self {
            d_s: S::lit(1.0),
            alpha_s: S::lit(25.0),
            gamma_slack: S::lit(0.01),
            lambda_w: S::lit(0.2),
            lambda_rv: S::lit(0.02),
            revisit_radius: S::lit(0.25),
            revisit_mode: RevisitMode::ReentryOnly,
            wsp_enabled: true,
            formulation: Formulation::Additive,
        }
    }
}

impl<S: Scalar> RewardConfig<S> {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.d_s > S::zero()) {
            return Err(RewardError::InvalidConfig("d_s must be positive"));
        }
        if !(self.alpha_s > S::zero() && self.alpha_s < S::lit(180.0)) {
            return Err(RewardError::InvalidConfig("alpha_s must lie in (0, 180)"));
        }
        if !(self.lambda_w >= S::zero()) || !(self.lambda_rv >= S::zero()) {
            return Err(RewardError::InvalidConfig("weights must be non-negative"));
        }
        if !(self.revisit_radius > S::zero()) {
            return Err(RewardError::InvalidConfig("revisit_radius must be positive"));
        }
        Ok(())
    }
}

/// Integer voxel key.
pub type VoxelKey = [i64; 3];

/// Component-wise `floor(p / s)`.
pub fn quantize_voxel<S: Scalar>(p: [S; 3], s: S) -> Result<VoxelKey, RewardError> {
    if !(s > S::zero()) {
        return Err(RewardError::NonPositiveResolution);
    }
    let q = |v: S| (v / s).floor().to_i64().unwrap_or(i64::MAX);
    Ok([q(p[0]), q(p[1]), q(p[2])])
}

/// Shaping part of the step reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZerTerms<S> {
    pub formulation: Formulation,
    pub distance: S,
    pub view: S,
    pub slack: S,
}

impl<S: Scalar> ZerTerms<S> {
    pub fn sum(&self) -> S {
        self.distance + self.view + self.slack
    }
}

/// Dense distance/view shaping. Angles in degrees, converted to radians here.
pub fn zer_step_reward<S: Scalar>(cfg: &RewardConfig<S>, d_prev: S, d_t: S, alpha_prev: S, alpha_t: S) -> ZerTerms<S> {
    let gated = match cfg.formulation {
        Formulation::Additive => d_t <= cfg.d_s,
        Formulation::Potential => true,
    };
    ZerTerms {
        formulation: cfg.formulation,
        distance: d_prev - d_t,
        view: if gated { deg_to_rad(alpha_prev) - deg_to_rad(alpha_t) } else { S::zero() },
        slack: -cfg.gamma_slack,
    }
}

/// Sparse success bonus, paid only on the step that issues `Stop`.
pub fn success_reward<S: Scalar>(cfg: &RewardConfig<S>, d_t: S, alpha_t: S, stopped: bool) -> S {
    if !stopped {
        return S::zero();
    }
    let near = d_t <= cfg.d_s;
    let aligned = near && alpha_t <= cfg.alpha_s;
    S::lit(5.0) * (S::lit(f64::from(u8::from(near))) + S::lit(f64::from(u8::from(aligned))))
}

/// Per-episode accumulators of the wandering penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardState<S> {
    pub d_prev: S,
    pub alpha_prev: S,
    /// Travelled path length.
    pub path_len: S,
    /// Cumulative revisit cost.
    pub revisit_cost: S,
    pub visited: HashSet<VoxelKey>,
    pub last_voxel: VoxelKey,
}

impl<S: Scalar> RewardState<S> {
    /// Fresh state at the episode start position.
    pub fn new(cfg: &RewardConfig<S>, d_0: S, alpha_0: S, p_0: [S; 3]) -> Result<Self, RewardError> {
        let k = quantize_voxel(p_0, cfg.revisit_radius)?;
        Ok(Self {
            d_prev: d_0,
            alpha_prev: alpha_0,
            path_len: S::zero(),
            revisit_cost: S::zero(),
            visited: HashSet::from([k]),
            last_voxel: k,
        })
    }
}

/// Unweighted penalty terms of one step plus bookkeeping for logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WspTerms<S> {
    pub formulation: Formulation,
    /// `-(l_t - l_{t-1})`, zero when the penalty is disabled.
    pub path: S,
    /// `-dc_t`, zero when the penalty is disabled.
    pub revisit: S,
    pub step_len: S,
    pub revisited: bool,
    pub voxel: VoxelKey,
}

/// Advance the path-length and revisit accumulators by one step.
///
/// The accumulators are updated whether or not the penalty is enabled, so
/// diagnostics stay available during the warm-up stage; only the returned
/// reward terms are zeroed.
pub fn wsp_step<S: Scalar>(
    cfg: &RewardConfig<S>,
    state: &mut RewardState<S>,
    p_prev: [S; 3],
    p_t: [S; 3],
) -> Result<WspTerms<S>, RewardError> {
    let step_len = ((p_t[0] - p_prev[0]).powi(2) + (p_t[1] - p_prev[1]).powi(2) + (p_t[2] - p_prev[2]).powi(2)).sqrt();
    state.path_len += step_len;
    let voxel = quantize_voxel(p_t, cfg.revisit_radius)?;
    let seen = state.visited.contains(&voxel);
    let revisited = match cfg.revisit_mode {
        RevisitMode::ReentryOnly => seen && voxel != state.last_voxel,
        RevisitMode::AnyRepeat => seen,
    };
    let dc = if revisited { cfg.lambda_rv } else { S::zero() };
    state.revisit_cost += dc;
    state.visited.insert(voxel);
    state.last_voxel = voxel;
    let (path, revisit) = if cfg.wsp_enabled { (-step_len, -dc) } else { (S::zero(), S::zero()) };
    Ok(WspTerms { formulation: cfg.formulation, path, revisit, step_len, revisited, voxel })
}

/// Named reward components of one step; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown<S> {
    pub distance_term: S,
    pub view_term: S,
    pub slack_term: S,
    pub success_term: S,
    /// Weighted path-length penalty, `<= 0`.
    pub wsp_path_term: S,
    /// Weighted revisit penalty, `<= 0`.
    pub wsp_revisit_term: S,
    pub total: S,
}

/// Combine the step components.
///
/// Both formulations share the arithmetic `shaping + slack + R_s +
/// lambda_w r^wsp`; they differ in the view gating applied by
/// [`zer_step_reward`], which is why the components carry their formulation.
pub fn total_step_reward<S: Scalar>(
    cfg: &RewardConfig<S>,
    zer: &ZerTerms<S>,
    success: S,
    wsp: &WspTerms<S>,
) -> Result<RewardBreakdown<S>, RewardError> {
    for found in [zer.formulation, wsp.formulation] {
        if found != cfg.formulation {
            return Err(RewardError::FormulationMismatch { expected: cfg.formulation, found });
        }
    }
    let wsp_path_term = cfg.lambda_w * wsp.path;
    let wsp_revisit_term = cfg.lambda_w * wsp.revisit;
    let total = zer.distance + zer.view + zer.slack + success + wsp_path_term + wsp_revisit_term;
    Ok(RewardBreakdown {
        distance_term: zer.distance,
        view_term: zer.view,
        slack_term: zer.slack,
        success_term: success,
        wsp_path_term,
        wsp_revisit_term,
        total,
    })
}

/// Shaping potential `lambda_w (l + C) + d + a`, angle in radians. The
/// `lambda_w` part is dropped while the penalty is disabled.
pub fn potential<S: Scalar>(cfg: &RewardConfig<S>, path_len: S, revisit_cost: S, d: S, alpha_deg: S) -> S {
    let wander = if cfg.wsp_enabled { cfg.lambda_w * (path_len + revisit_cost) } else { S::zero() };
    wander + d + deg_to_rad(alpha_deg)
}

/// Two-stage schedule: the penalty switches on once
/// `iteration >= warmup_fraction * total_iterations`.
pub fn wsp_schedule(iteration: u64, total_iterations: u64, warmup_fraction: f64) -> bool {
    iteration as f64 >= warmup_fraction * total_iterations as f64
}

/// Inputs of one reward step as observed by the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepObservation<S> {
    pub d_t: S,
    pub alpha_t_deg: S,
    pub position: [S; 3],
    pub stopped: bool,
}

/// Per-episode reward engine: owns the config and [`RewardState`].
#[derive(Debug, Clone)]
pub struct RewardEngine<S> {
    cfg: RewardConfig<S>,
    state: RewardState<S>,
    position: [S; 3],
}

/// Everything the engine produced for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardStep<S> {
    pub breakdown: RewardBreakdown<S>,
    pub wsp: WspTerms<S>,
}

impl<S: Scalar> RewardEngine<S> {
    pub fn new(cfg: RewardConfig<S>, d_0: S, alpha_0_deg: S, p_0: [S; 3]) -> Result<Self, RewardError> {
        cfg.validate()?;
        let state = RewardState::new(&cfg, d_0, alpha_0_deg, p_0)?;
        Ok(Self { cfg, state, position: p_0 })
    }

    pub fn config(&self) -> &RewardConfig<S> {
        &self.cfg
    }

    pub fn state(&self) -> &RewardState<S> {
        &self.state
    }

    /// Toggle the penalty mid-episode (schedule boundaries).
    pub fn set_wsp_enabled(&mut self, enabled: bool) {
        self.cfg.wsp_enabled = enabled;
    }

    /// Potential of the current state under the current config.
    pub fn potential(&self) -> S {
        potential(&self.cfg, self.state.path_len, self.state.revisit_cost, self.state.d_prev, self.state.alpha_prev)
    }

    pub fn step(&mut self, obs: StepObservation<S>) -> Result<RewardStep<S>, RewardError> {
        let zer = zer_step_reward(&self.cfg, self.state.d_prev, obs.d_t, self.state.alpha_prev, obs.alpha_t_deg);
        let success = success_reward(&self.cfg, obs.d_t, obs.alpha_t_deg, obs.stopped);
        let wsp = wsp_step(&self.cfg, &mut self.state, self.position, obs.position)?;
        let breakdown = total_step_reward(&self.cfg, &zer, success, &wsp)?;
        self.state.d_prev = obs.d_t;
        self.state.alpha_prev = obs.alpha_t_deg;
        self.position = obs.position;
        Ok(RewardStep { breakdown, wsp })
    }
}
