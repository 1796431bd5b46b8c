//! Run configuration, provenance hashing and input resolution.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use navlab_core::env::{builtin_map, load_map, read_episodes, sample_episodes, Episode, GridMap, MapMeta};
use navlab_core::hier::HierConfig;
use navlab_core::policy::{EpisodePool, NetConfig, TrainConfig};
use navlab_core::reward::RewardConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "NAVLAB_SEED";
pub const OUT_ENV: &str = "NAVLAB_OUT";

/// Where episodes come from. `seed: None` inherits a seed during
/// [`RunConfig::resolve`], so resolved configs never carry an implicit one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeSpec {
    File { path: String },
    Sample { n_per_stratum: usize, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Checkpoint to evaluate; `None` runs the scripted shortest-path baseline.
    pub checkpoint: Option<String>,
    /// Keep only the first `n` episodes.
    pub n_episodes: Option<usize>,
    pub seed: u64,
    /// Episodes stepped together.
    pub batch: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { checkpoint: None, n_episodes: None, seed: 1, batch: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `builtin:<name>` or a path to an ASCII map with an optional `.json` sidecar.
    pub maps: Vec<String>,
    /// Evaluated by `run`.
    pub episodes: EpisodeSpec,
    pub train_episodes: EpisodeSpec,
    pub probe_episodes: EpisodeSpec,
    pub hier: HierConfig,
    pub reward: RewardConfig<f64>,
    pub train: TrainConfig,
    pub net: NetConfig,
    pub eval: EvalSettings,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            maps: vec!["builtin:two-room".into()],
            episodes: EpisodeSpec::Sample { n_per_stratum: 5, seed: None },
            train_episodes: EpisodeSpec::Sample { n_per_stratum: 30, seed: Some(100) },
            probe_episodes: EpisodeSpec::Sample { n_per_stratum: 10, seed: Some(200) },
            hier: HierConfig::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            net: NetConfig::default(),
            eval: EvalSettings::default(),
            output_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Apply the environment overrides and fill inherited seeds.
    pub fn resolve(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 = v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an integer"))?;
            self.train.seed = seed;
            self.eval.seed = seed;
        }
        if let Ok(v) = std::env::var(OUT_ENV) {
            self.output_dir = v;
        }
        fill_seed(&mut self.episodes, self.eval.seed);
        fill_seed(&mut self.train_episodes, self.train.seed);
        fill_seed(&mut self.probe_episodes, self.train.seed.wrapping_add(1));
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() {
            bail!("config lists no maps");
        }
        self.reward.validate()?;
        self.train.validate()?;
        if self.hier.k == 0 {
            bail!("hier.k must be at least 1");
        }
        if self.eval.batch == 0 {
            bail!("eval.batch must be positive");
        }
        Ok(())
    }

    /// Provenance hash; the output directory does not enter it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        hash_json(&c)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }
}

fn fill_seed(spec: &mut EpisodeSpec, seed: u64) {
    if let EpisodeSpec::Sample { seed: s @ None, .. } = spec {
        *s = Some(seed);
    }
}

/// Hex SHA-256 of the compact JSON form.
pub fn hash_json<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    format!("{:x}", Sha256::digest(&bytes))
}

pub fn load_map_ref(spec: &str) -> Result<GridMap> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin_map(name).with_context(|| format!("unknown built-in map {name:?}"));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading map {spec}"))?;
    let sidecar = path.with_extension("json");
    let mut meta: MapMeta = if sidecar.exists() {
        let s = std::fs::read_to_string(&sidecar)?;
        serde_json::from_str(&s).with_context(|| format!("parsing {}", sidecar.display()))?
    } else {
        MapMeta::default()
    };
    if meta.name.is_empty() {
        meta.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    load_map(&text, &meta).with_context(|| format!("loading map {spec}"))
}

pub fn load_maps(specs: &[String]) -> Result<Vec<Arc<GridMap>>> {
    specs.iter().map(|s| load_map_ref(s).map(Arc::new)).collect()
}

pub fn load_episodes(spec: &EpisodeSpec, maps: &[Arc<GridMap>]) -> Result<Vec<Episode>> {
    match spec {
        EpisodeSpec::File { path } => {
            let f = std::fs::File::open(path).with_context(|| format!("opening episodes {path}"))?;
            Ok(read_episodes(std::io::BufReader::new(f))?)
        }
        EpisodeSpec::Sample { n_per_stratum, seed } => {
            let seed = seed.context("episode seed unresolved")?;
            let mut out = Vec::new();
            for m in maps {
                out.extend(sample_episodes(m, *n_per_stratum, seed)?);
            }
            Ok(out)
        }
    }
}

pub fn episode_pool(spec: &EpisodeSpec, maps: &[Arc<GridMap>], limit: Option<usize>) -> Result<EpisodePool> {
    let mut eps = load_episodes(spec, maps)?;
    if let Some(n) = limit {
        eps.truncate(n);
    }
    if eps.is_empty() {
        bail!("episode set is empty");
    }
    Ok(EpisodePool::new(maps.to_vec(), eps)?)
}
