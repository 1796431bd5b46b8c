//! `bench`: amortized per-step latency of the two-rate loop.
//!
//! One global step counter drives the planner, so every interval `k` that
//! divides `steps` sees exactly `steps / k` planner calls regardless of
//! episode boundaries. `t_fast` is measured by the same loop with the
//! planner switched off.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use navlab_core::env::{sample_episodes, Action, GridMap, NavEnv, Pose};
use navlab_core::hier::{DelayedPlanner, NullPlanner, Plan, PlanContext, Planner};
use navlab_core::metrics::LatencyProfile;
use navlab_core::policy::{argmax, EpisodePool, NetConfig, Observation, PolicyNet, FEATURE_WIDTH};
use serde::Serialize;

use crate::config::{hash_json, load_map_ref};
use crate::{Classify, CmdResult, Failure};

/// Untimed steps before each measurement.
const WARMUP_STEPS: u32 = 20;

#[derive(Debug, Clone, Serialize)]
pub struct BenchArgs {
    pub k: Vec<u32>,
    pub t_slow_ms: f64,
    pub steps: u32,
    pub map: String,
    pub seed: u64,
}

/// Executor workload cycling through sampled episodes.
struct Workload {
    map: Arc<GridMap>,
    pool: EpisodePool,
    next: usize,
    env: NavEnv,
    net: PolicyNet<f32>,
    hidden: Vec<ndarray::Array2<f32>>,
    prev_action: Option<Action>,
    plan: Plan,
    feats: Vec<f32>,
}

impl Workload {
    fn new(map: GridMap, seed: u64) -> Result<Self> {
        let map = Arc::new(map);
        let eps = sample_episodes(&map, 2, seed)?;
        ensure!(!eps.is_empty(), "map yields no episodes");
        let pool = EpisodePool::new(vec![map.clone()], eps)?;
        let (_, ep, field) = pool.get(0);
        let env = NavEnv::new(map.clone(), ep.clone(), field)?;
        let net = PolicyNet::<f32>::init(NetConfig::default(), seed);
        let hidden = net.zero_hidden(1);
        Ok(Self {
            map,
            pool,
            next: 1,
            env,
            net,
            hidden,
            prev_action: None,
            plan: Plan::explore(0),
            feats: vec![0.0; FEATURE_WIDTH],
        })
    }

    /// One executor step: features, network forward, environment transition.
    fn step(&mut self, g: u32, planner: Option<(&mut dyn Planner, u32)>) -> Result<()> {
        let pose = self.env.pose();
        let goal = self.env.episode().goal;
        let k = match planner {
            Some((p, k)) => {
                if g % k == 0 {
                    let history: [Pose; 1] = [pose];
                    let ctx = PlanContext {
                        episode_id: &self.env.episode().id,
                        step: g,
                        map: &self.map,
                        field: self.env.field(),
                        pose,
                        goal,
                        history: &history,
                    };
                    self.plan = p.plan(&ctx)?;
                }
                k
            }
            None => 1,
        };
        let obs = Observation {
            patch: self.map.ego_patch(pose.position(), f64::from(pose.heading.degrees())),
            pose,
            goal: goal.position(),
            geodesic_m: self.env.distance_to_goal(),
            plan: &self.plan,
            step: g,
            k,
            prev_action: self.prev_action,
        };
        obs.features_into(&mut self.feats);
        let (logits, _, h) = self.net.policy_step(&self.feats, &self.hidden)?;
        self.hidden = h;
        let action = Action::from_index(argmax(&logits)).context("action index")?;
        self.env.step(action);
        self.prev_action = Some(action);
        if self.env.is_done() {
            let (_, e, f) = self.pool.get(self.next % self.pool.len());
            self.next += 1;
            self.env = NavEnv::new(self.map.clone(), e.clone(), f)?;
            self.hidden = self.net.zero_hidden(1);
            self.prev_action = None;
        }
        Ok(())
    }

    /// Mean wall time per step in milliseconds.
    fn time(&mut self, steps: u32, mut planner: Option<(&mut dyn Planner, u32)>) -> Result<f64> {
        for g in 0..WARMUP_STEPS {
            self.step(g, None)?;
        }
        let t0 = Instant::now();
        for g in 0..steps {
            let p = planner.as_mut().map(|(p, k)| (&mut **p as &mut dyn Planner, *k));
            self.step(g, p)?;
        }
        Ok(t0.elapsed().as_secs_f64() * 1000.0 / f64::from(steps))
    }
}

pub fn cmd_bench(args: &BenchArgs, out: &Path) -> CmdResult {
    if args.k.is_empty() || args.k.contains(&0) {
        return Err(Failure::Input(anyhow::anyhow!("--k needs positive intervals")));
    }
    if args.steps == 0 || !(args.t_slow_ms.is_finite() && args.t_slow_ms >= 0.0) {
        return Err(Failure::Input(anyhow::anyhow!("--steps must be positive and --t-slow-ms non-negative")));
    }
    for &k in &args.k {
        if args.steps % k != 0 {
            eprintln!("bench: warning: k={k} does not divide {} steps; planner calls round up", args.steps);
        }
    }
    let map = load_map_ref(&args.map).input()?;
    let hash = hash_json(args);
    let profiles = measure(args, map).runtime()?;

    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display())).runtime()?);
    writeln!(w, "k,t_fast_ms,t_slow_ms,model_ms,measured_ms,fps,config_hash").runtime()?;
    for p in &profiles {
        writeln!(w, "{},{},{},{},{},{},{hash}", p.k, p.t_fast_ms, p.t_slow_ms, p.model_ms(), p.measured_avg_ms, p.fps)
            .runtime()?;
        eprintln!(
            "bench: k={:3} model {:8.3} ms measured {:8.3} ms ({:6.2} fps)",
            p.k,
            p.model_ms(),
            p.measured_avg_ms,
            p.fps
        );
    }
    w.flush().runtime()?;
    Ok(())
}

fn measure(args: &BenchArgs, map: GridMap) -> Result<Vec<LatencyProfile>> {
    let mut wl = Workload::new(map, args.seed)?;
    let t_fast = wl.time(args.steps, None)?;
    let delay = Duration::from_secs_f64(args.t_slow_ms / 1000.0);
    let mut planner = DelayedPlanner::new(NullPlanner, delay);
    args.k
        .iter()
        .map(|&k| {
            let measured = wl.time(args.steps, Some((&mut planner, k)))?;
            Ok(LatencyProfile::new(t_fast, args.t_slow_ms, k, measured))
        })
        .collect()
}
