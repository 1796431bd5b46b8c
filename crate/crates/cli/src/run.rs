//! `run` and `sample-episodes`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{ensure, Context};
use navlab_core::env::{sample_episodes, view_angle_diff, write_episodes};
use navlab_core::metrics::{stratified_report, EpisodeResult, StratifiedReport};
use navlab_core::policy::{evaluate, Actor, EpisodePool, EvalOutput};
use serde::Serialize;

use crate::config::{episode_pool, hash_json, load_map_ref, load_maps, RunConfig};
use crate::tlog::{
    read_log, replay_rewards, split_episodes, sr_spl_from_steps, write_record, EpisodeEnd, EpisodeStart, Header,
    LogRecord, StepLine, LOG_VERSION,
};
use crate::train::Checkpoint;
use crate::{Classify, CmdResult};

/// Tolerance between cached metrics and the log recomputation.
const METRIC_AGREEMENT: f64 = 1e-9;

pub fn cmd_run(config: &Path) -> CmdResult {
    let cfg = RunConfig::from_file(config).and_then(RunConfig::resolve).input()?;
    let hash = cfg.hash();
    let maps = load_maps(&cfg.maps).input()?;
    let pool = episode_pool(&cfg.episodes, &maps, cfg.eval.n_episodes).input()?;
    let ckpt = cfg.eval.checkpoint.as_deref().map(Checkpoint::load).transpose().input()?;
    let (out, actor_name) = match &ckpt {
        Some(c) => {
            if c.state.net.config() != &cfg.net {
                return Err(anyhow::anyhow!("checkpoint network shape differs from config")).input();
            }
            let out = evaluate(&Actor::Net(&c.state.net), &pool, &cfg.hier, &cfg.reward, cfg.eval.batch, true).runtime()?;
            (out, cfg.eval.checkpoint.clone().unwrap_or_default())
        }
        None => {
            let out = evaluate::<f32>(&Actor::OracleGreedy, &pool, &cfg.hier, &cfg.reward, cfg.eval.batch, true).runtime()?;
            (out, "oracle_greedy".to_string())
        }
    };

    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).runtime()?;
    write_resolved_config(&dir, &cfg, &hash).runtime()?;
    let header = Header {
        version: LOG_VERSION,
        config_hash: hash.clone(),
        seed: cfg.eval.seed,
        actor: actor_name,
        reward: cfg.reward,
        k: cfg.hier.k,
    };
    let log_path = dir.join("trajectories.jsonl");
    write_trajectories(&log_path, &header, &pool, &out).runtime()?;
    let report = stratified_report(&out.results).runtime()?;
    write_results_csv(&dir.join("results.csv"), "eval", &report, &hash).runtime()?;

    let (sr_log, spl_log) = recheck_log(&log_path, &out.results).runtime()?;
    let summary = Summary { config_hash: &hash, report: &report, sr_from_log: sr_log, spl_from_log: spl_log };
    write_json(&dir.join("summary.json"), &summary).runtime()?;
    eprintln!(
        "run: {} episodes, SR {:.3}, SPL {:.3} -> {}",
        out.results.len(),
        report.overall.sr,
        report.overall.spl,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    config_hash: &'a str,
    report: &'a StratifiedReport<f64>,
    sr_from_log: f64,
    spl_from_log: f64,
}

fn write_trajectories(path: &Path, header: &Header, pool: &EpisodePool, out: &EvalOutput) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_record(&mut w, &LogRecord::Header(header.clone()))?;
    for (i, ((res, traj), events)) in out.results.iter().zip(&out.trajectories).zip(&out.events).enumerate() {
        let (map, ep, field) = pool.get(i);
        let views: Vec<f64> = ep.goal_views.iter().map(|h| f64::from(h.degrees())).collect();
        let start = EpisodeStart {
            episode_id: ep.id.clone(),
            map: map.name().to_string(),
            start: ep.start,
            goal: ep.goal,
            goal_views: ep.goal_views.clone(),
            difficulty: ep.difficulty,
            l_i: ep.shortest_path_length,
            max_steps: ep.max_steps,
            d_0: field.at(&map, ep.start.position()).meters(),
            alpha_0_deg: view_angle_diff(f64::from(ep.start.heading.degrees()), &views)?,
        };
        write_record(&mut w, &LogRecord::EpisodeStart(start))?;
        for rec in traj {
            write_record(&mut w, &LogRecord::Step(StepLine::from_record(rec)))?;
        }
        for e in events {
            let ev = LogRecord::PlannerEvent { episode_id: ep.id.clone(), step: e.step, kind: e.kind.clone() };
            write_record(&mut w, &ev)?;
        }
        let end = EpisodeEnd {
            episode_id: ep.id.clone(),
            success: res.success,
            l_i: res.shortest,
            p_i: res.traveled,
            steps: res.steps,
            revisit_steps: res.revisit_steps,
            planner_calls: res.planner_calls,
        };
        write_record(&mut w, &LogRecord::EpisodeEnd(end))?;
    }
    w.flush()?;
    Ok(())
}

/// Read the log back, replay every reward and recompute SR/SPL from raw
/// steps; any disagreement with the in-memory results is an error.
fn recheck_log(path: &Path, results: &[EpisodeResult<f64>]) -> anyhow::Result<(f64, f64)> {
    let recs = read_log(BufReader::new(File::open(path)?))?;
    let (header, eps) = split_episodes(&recs)?;
    replay_rewards(&header, &eps)?;
    let (sr_log, spl_log) = sr_spl_from_steps(&eps, header.reward.d_s)?;
    let sr = navlab_core::metrics::sr(results)?;
    let spl = navlab_core::metrics::spl(results)?;
    ensure!((sr - sr_log).abs() <= METRIC_AGREEMENT, "SR {sr} disagrees with log recomputation {sr_log}");
    ensure!((spl - spl_log).abs() <= METRIC_AGREEMENT, "SPL {spl} disagrees with log recomputation {spl_log}");
    Ok((sr_log, spl_log))
}

/// `split,difficulty,n,SR,SPL,config_hash`, one row per stratum present.
pub fn write_results_csv(path: &Path, split: &str, report: &StratifiedReport<f64>, hash: &str) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "split,difficulty,n,SR,SPL,config_hash")?;
    for (d, s) in &report.strata {
        writeln!(w, "{split},{d},{},{},{},{hash}", s.n, s.sr, s.spl)?;
    }
    w.flush()?;
    Ok(())
}

/// `config.json`: the fully resolved config, every default spelled out.
pub fn write_resolved_config(dir: &Path, cfg: &RunConfig, hash: &str) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Resolved<'a> {
        config_hash: &'a str,
        config: &'a RunConfig,
    }
    write_json(&dir.join("config.json"), &Resolved { config_hash: hash, config: cfg })
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, v)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SampleMeta<'a> {
    config_hash: &'a str,
    map: &'a str,
    n_per_stratum: usize,
    seed: u64,
    episodes: usize,
}

/// Writes the episodes plus a `<out>.meta.json` sidecar carrying the hash,
/// since the episode format has no room for a header.
pub fn cmd_sample_episodes(map: &str, n_per_stratum: usize, seed: u64, out: &Path) -> CmdResult {
    let grid = load_map_ref(map).input()?;
    let eps = sample_episodes(&grid, n_per_stratum, seed).runtime()?;
    let hash = hash_json(&(map, n_per_stratum, seed));
    let f = File::create(out).with_context(|| format!("creating {}", out.display())).runtime()?;
    let mut w = BufWriter::new(f);
    write_episodes(&mut w, &eps).runtime()?;
    w.flush().runtime()?;
    let meta = SampleMeta { config_hash: &hash, map, n_per_stratum, seed, episodes: eps.len() };
    let mut side = out.as_os_str().to_owned();
    side.push(".meta.json");
    write_json(Path::new(&side), &meta).runtime()?;
    eprintln!("sample-episodes: {} episodes -> {}", eps.len(), out.display());
    Ok(())
}
