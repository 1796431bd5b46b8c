//! `train`: single runs, the penalty-weight sweep and resumption.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use navlab_core::policy::{train, CurveRow, TrainSetup, TrainState};
use serde::{Deserialize, Serialize};

use crate::config::{episode_pool, load_maps, RunConfig};
use crate::run::{write_json, write_resolved_config};
use crate::{Classify, CmdResult, Failure};

pub const CHECKPOINT_FORMAT: &str = "navlab-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Penalty weights visited by `--sweep`.
pub const LAMBDA_W_GRID: [f64; 8] = [1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub state: TrainState<f32>,
}

impl Checkpoint {
    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {path}"))?;
        let mut c: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {path}"))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            bail!("{path}: unsupported checkpoint {} v{}", c.format, c.version);
        }
        c.state.net.restore_layout()?;
        Ok(c)
    }
}

pub fn cmd_train(config: &Path, sweep: bool, resume: Option<&Path>) -> CmdResult {
    if sweep && resume.is_some() {
        return Err(Failure::Input(anyhow::anyhow!("--sweep and --resume cannot be combined")));
    }
    let cfg = RunConfig::from_file(config).and_then(RunConfig::resolve).input()?;
    let resume = resume
        .map(|p| Checkpoint::load(&p.to_string_lossy()))
        .transpose()
        .input()?;
    if sweep {
        for lw in LAMBDA_W_GRID {
            let mut c = cfg.clone();
            c.reward.lambda_w = lw;
            c.output_dir = cfg.out_dir().join(format!("lambda_w_{lw:.1}")).to_string_lossy().into_owned();
            train_one(&c, None)?;
        }
        Ok(())
    } else {
        train_one(&cfg, resume.map(|c| c.state))
    }
}

fn train_one(cfg: &RunConfig, resume: Option<TrainState<f32>>) -> CmdResult {
    let hash = cfg.hash();
    let maps = load_maps(&cfg.maps).input()?;
    let train_pool = episode_pool(&cfg.train_episodes, &maps, None).input()?;
    let probe_pool = episode_pool(&cfg.probe_episodes, &maps, None).input()?;
    if let Some(s) = &resume {
        if s.net.config() != &cfg.net {
            return Err(Failure::Input(anyhow::anyhow!("checkpoint network shape differs from config")));
        }
    }
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).runtime()?;
    write_resolved_config(&dir, cfg, &hash).runtime()?;

    let mut curve = CurveWriter::create(&dir.join("curve.csv"), &hash).runtime()?;
    let setup = TrainSetup {
        train: &train_pool,
        probe: &probe_pool,
        hier: &cfg.hier,
        reward: &cfg.reward,
        net: cfg.net,
        cfg: &cfg.train,
    };
    let mut write_err = None;
    let outcome = train::<f32>(&setup, resume, |row| {
        if let Some(sr) = row.probe_sr {
            eprintln!(
                "iter {:5} steps {:8} reward {:+.4} probe SR {:.3} SPL {:.3}",
                row.iteration,
                row.env_steps,
                row.mean_reward,
                sr,
                row.probe_spl.unwrap_or(f64::NAN)
            );
        }
        if write_err.is_none() {
            write_err = curve.row(row).err();
        }
    })
    .runtime()?;
    if let Some(e) = write_err {
        return Err(Failure::Runtime(e));
    }
    curve.finish().runtime()?;
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config_hash: hash,
        seed: cfg.train.seed,
        state: outcome.state,
    };
    write_json(&dir.join("checkpoint.json"), &ckpt).runtime()?;
    eprintln!("train: {} iterations -> {}", outcome.curve.len(), dir.display());
    Ok(())
}

/// Curve CSV; probe columns are empty on iterations without a probe.
struct CurveWriter {
    w: BufWriter<File>,
    hash: String,
}

impl CurveWriter {
    fn create(path: &Path, hash: &str) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(
            w,
            "iteration,env_steps,mean_reward,probe_SR,probe_SPL,wsp_enabled,mean_wsp,loss,policy_loss,value_loss,entropy,clip_fraction,config_hash"
        )?;
        Ok(Self { w, hash: hash.to_string() })
    }

    fn row(&mut self, r: &CurveRow) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let s = &r.stats;
        writeln!(
            self.w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.env_steps,
            r.mean_reward,
            opt(r.probe_sr),
            opt(r.probe_spl),
            r.wsp_enabled,
            r.mean_wsp,
            s.loss,
            s.policy_loss,
            s.value_loss,
            s.entropy,
            s.clip_fraction,
            self.hash
        )?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}
