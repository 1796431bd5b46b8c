//! Trajectory logs: one JSON object per line, tagged by `type`.
//!
//! A log is a `header` followed, per episode, by `episode_start`, its
//! `step` records, any `planner_event`s and one `episode_end`.

use std::io::{BufRead, Write};

use anyhow::{bail, ensure, Context, Result};
use navlab_core::env::{Action, Difficulty, Heading, Pose};
use navlab_core::hier::{PlanToken, PlannerEventKind};
use navlab_core::policy::StepRecord;
use navlab_core::reward::{RewardBreakdown, RewardConfig, RewardEngine, StepObservation, VoxelKey};
use serde::{Deserialize, Serialize};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(Header),
    EpisodeStart(EpisodeStart),
    Step(StepLine),
    PlannerEvent { episode_id: String, step: u32, kind: PlannerEventKind },
    EpisodeEnd(EpisodeEnd),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Executor: checkpoint path or `oracle_greedy`.
    pub actor: String,
    pub reward: RewardConfig<f64>,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStart {
    pub episode_id: String,
    pub map: String,
    pub start: Pose,
    pub goal: Pose,
    pub goal_views: Vec<Heading>,
    pub difficulty: Difficulty,
    pub l_i: f64,
    pub max_steps: u32,
    /// Initial geodesic distance and view-angle difference.
    pub d_0: f64,
    pub alpha_0_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLine {
    pub t: u32,
    pub x: f64,
    pub y: f64,
    pub heading: Heading,
    pub action: Action,
    pub d_t: f64,
    pub alpha_t_deg: f64,
    pub distance_term: f64,
    pub view_term: f64,
    pub slack_term: f64,
    pub success_term: f64,
    pub wsp_path_term: f64,
    pub wsp_revisit_term: f64,
    pub total: f64,
    pub plan_token: PlanToken,
    pub plan_step: u32,
    pub voxel_key: VoxelKey,
    pub revisit: bool,
    pub collided: bool,
    pub wsp_enabled: bool,
}

impl StepLine {
    pub fn from_record(r: &StepRecord) -> Self {
        let b = &r.reward;
        Self {
            t: r.step,
            x: r.pose.x,
            y: r.pose.y,
            heading: r.pose.heading,
            action: r.action,
            d_t: r.d,
            alpha_t_deg: r.alpha_deg,
            distance_term: b.distance_term,
            view_term: b.view_term,
            slack_term: b.slack_term,
            success_term: b.success_term,
            wsp_path_term: b.wsp_path_term,
            wsp_revisit_term: b.wsp_revisit_term,
            total: b.total,
            plan_token: r.plan_token,
            plan_step: r.plan_step,
            voxel_key: r.voxel,
            revisit: r.revisited,
            collided: r.collided,
            wsp_enabled: r.wsp_enabled,
        }
    }

    pub fn breakdown(&self) -> RewardBreakdown<f64> {
        RewardBreakdown {
            distance_term: self.distance_term,
            view_term: self.view_term,
            slack_term: self.slack_term,
            success_term: self.success_term,
            wsp_path_term: self.wsp_path_term,
            wsp_revisit_term: self.wsp_revisit_term,
            total: self.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub episode_id: String,
    pub success: bool,
    pub l_i: f64,
    pub p_i: f64,
    pub steps: u32,
    pub revisit_steps: u32,
    pub planner_calls: u32,
}

pub fn write_record<W: Write>(w: &mut W, r: &LogRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, r)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_log<R: BufRead>(r: R) -> Result<Vec<LogRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("log line {}", i + 1))?);
    }
    Ok(out)
}

/// An episode reassembled from a log.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEpisode {
    pub start: EpisodeStart,
    pub steps: Vec<StepLine>,
    pub end: EpisodeEnd,
}

pub fn split_episodes(records: &[LogRecord]) -> Result<(Header, Vec<LoggedEpisode>)> {
    let mut it = records.iter();
    let Some(LogRecord::Header(header)) = it.next() else { bail!("log does not start with a header") };
    let mut eps = Vec::new();
    let mut open: Option<(EpisodeStart, Vec<StepLine>)> = None;
    for r in it {
        match r {
            LogRecord::Header(_) => bail!("second header"),
            LogRecord::EpisodeStart(s) => {
                ensure!(open.is_none(), "episode {} starts inside another", s.episode_id);
                open = Some((s.clone(), Vec::new()));
            }
            LogRecord::Step(s) => open.as_mut().context("step outside an episode")?.1.push(s.clone()),
            LogRecord::PlannerEvent { .. } => {}
            LogRecord::EpisodeEnd(e) => {
                let (start, steps) = open.take().context("episode_end without start")?;
                ensure!(start.episode_id == e.episode_id, "mismatched episode ids");
                eps.push(LoggedEpisode { start, steps, end: e.clone() });
            }
        }
    }
    ensure!(open.is_none(), "log ends inside an episode");
    Ok((header.clone(), eps))
}

/// Recompute every reward breakdown from logged poses and distances and
/// compare bit for bit. Returns the number of steps checked.
pub fn replay_rewards(header: &Header, eps: &[LoggedEpisode]) -> Result<usize> {
    let mut checked = 0;
    for ep in eps {
        let s = &ep.start;
        let p0 = [s.start.x, s.start.y, 0.0];
        let mut engine = RewardEngine::new(header.reward, s.d_0, s.alpha_0_deg, p0)?;
        for st in &ep.steps {
            engine.set_wsp_enabled(st.wsp_enabled);
            let got = engine.step(StepObservation {
                d_t: st.d_t,
                alpha_t_deg: st.alpha_t_deg,
                position: [st.x, st.y, 0.0],
                stopped: st.action == Action::Stop,
            })?;
            let want = st.breakdown();
            let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
            let g = got.breakdown;
            ensure!(
                same(g.distance_term, want.distance_term)
                    && same(g.view_term, want.view_term)
                    && same(g.slack_term, want.slack_term)
                    && same(g.success_term, want.success_term)
                    && same(g.wsp_path_term, want.wsp_path_term)
                    && same(g.wsp_revisit_term, want.wsp_revisit_term)
                    && same(g.total, want.total),
                "episode {} step {}: replayed {:?} != logged {:?}",
                s.episode_id,
                st.t,
                g,
                want
            );
            ensure!(got.wsp.revisited == st.revisit && got.wsp.voxel == st.voxel_key, "revisit mismatch at step {}", st.t);
            checked += 1;
        }
    }
    Ok(checked)
}

/// SR and SPL from raw step records: success is a final `Stop` within
/// `d_s`, travel is the summed displacement between logged positions.
pub fn sr_spl_from_steps(eps: &[LoggedEpisode], d_s: f64) -> Result<(f64, f64)> {
    ensure!(!eps.is_empty(), "no episodes in log");
    let (mut hits, mut spl) = (0.0, 0.0);
    for ep in eps {
        let last = ep.steps.last();
        let success = last.is_some_and(|s| s.action == Action::Stop && s.d_t <= d_s);
        if success {
            let mut prev = (ep.start.start.x, ep.start.start.y);
            let mut p = 0.0;
            for s in &ep.steps {
                p += (s.x - prev.0).hypot(s.y - prev.1);
                prev = (s.x, s.y);
            }
            hits += 1.0;
            spl += ep.start.l_i / p.max(ep.start.l_i);
        }
    }
    let n = eps.len() as f64;
    Ok((hits / n, spl / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heading(d: i64) -> Heading {
        Heading::from_degrees(d).unwrap()
    }

    fn episode(steps: Vec<StepLine>, success: bool) -> LoggedEpisode {
        let start = EpisodeStart {
            episode_id: "e".into(),
            map: "m".into(),
            start: Pose::new(0.0, 0.0, heading(0)),
            goal: Pose::new(1.0, 0.0, heading(0)),
            goal_views: vec![heading(0)],
            difficulty: Difficulty::Easy,
            l_i: 0.5,
            max_steps: 500,
            d_0: 1.0,
            alpha_0_deg: 0.0,
        };
        let end = EpisodeEnd {
            episode_id: "e".into(),
            success,
            l_i: 0.5,
            p_i: 0.5,
            steps: steps.len() as u32,
            revisit_steps: 0,
            planner_calls: 1,
        };
        LoggedEpisode { start, steps, end }
    }

    fn line(t: u32, x: f64, action: Action, d: f64) -> StepLine {
        StepLine {
            t,
            x,
            y: 0.0,
            heading: heading(0),
            action,
            d_t: d,
            alpha_t_deg: 0.0,
            distance_term: 0.0,
            view_term: 0.0,
            slack_term: 0.0,
            success_term: 0.0,
            wsp_path_term: 0.0,
            wsp_revisit_term: 0.0,
            total: 0.0,
            plan_token: PlanToken::Explore,
            plan_step: 0,
            voxel_key: [0, 0, 0],
            revisit: false,
            collided: false,
            wsp_enabled: false,
        }
    }

    #[test]
    fn metrics_from_raw_steps() {
        let ok = episode(
            vec![line(1, 0.25, Action::MoveForward, 0.75), line(2, 0.5, Action::MoveForward, 0.5), line(3, 0.5, Action::Stop, 0.5)],
            true,
        );
        let far = episode(vec![line(1, 0.0, Action::Stop, 1.5)], false);
        let (sr, spl) = sr_spl_from_steps(&[ok, far], 1.0).unwrap();
        assert_eq!(sr, 0.5);
        assert_eq!(spl, 0.5);
    }

    #[test]
    fn structure_is_checked() {
        assert!(split_episodes(&[]).is_err());
        let h = LogRecord::Header(Header {
            version: LOG_VERSION,
            config_hash: "h".into(),
            seed: 1,
            actor: "oracle_greedy".into(),
            reward: RewardConfig::default(),
            k: 15,
        });
        let ep = episode(vec![], false);
        let recs = vec![h.clone(), LogRecord::EpisodeStart(ep.start.clone())];
        assert!(split_episodes(&recs).is_err());
        let recs = vec![h, LogRecord::EpisodeStart(ep.start.clone()), LogRecord::EpisodeEnd(ep.end.clone())];
        let (_, eps) = split_episodes(&recs).unwrap();
        assert_eq!(eps.len(), 1);
    }
}
