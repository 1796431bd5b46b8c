//! Episodes, difficulty strata and the seeded episode sampler.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geodesic::DistanceField;
use super::map::{CellIndex, GridMap};
use super::{EnvError, Heading, Pose, DEFAULT_MAX_STEPS, NUM_HEADINGS};

/// Geodesic-length strata: Easy `[1.5, 3)`, Medium `[3, 5)`, Hard `[5, 10]` meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn range_m(self) -> (f64, f64) {
        match self {
            Difficulty::Easy => (1.5, 3.0),
            Difficulty::Medium => (3.0, 5.0),
            Difficulty::Hard => (5.0, 10.0),
        }
    }

    pub fn contains(self, d: f64) -> bool {
        let (lo, hi) = self.range_m();
        match self {
            Difficulty::Hard => d >= lo && d <= hi,
            _ => d >= lo && d < hi,
        }
    }

    pub fn classify(d: f64) -> Option<Difficulty> {
        Self::ALL.into_iter().find(|s| s.contains(d))
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub map_ref: String,
    pub start: Pose,
    /// Goal pose; its heading is the default goal view.
    pub goal: Pose,
    #[serde(default)]
    pub goal_views: Vec<Heading>,
    pub shortest_path_length: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    pub difficulty: Difficulty,
}

fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}

impl Episode {
    /// Fill defaults that the file format allows to be omitted.
    pub fn normalized(mut self) -> Self {
        if self.goal_views.is_empty() {
            self.goal_views.push(self.goal.heading);
        }
        self
    }
}

/// Attempts per stratum before the sampler gives up.
pub const SAMPLER_ATTEMPTS: usize = 20_000;

/// Rejection-sample `n_per_stratum` start/goal pairs per difficulty stratum.
///
/// Output order is Easy, Medium, Hard; the same `(map, n, seed)` always
/// yields the same list.
pub fn sample_episodes(map: &GridMap, n_per_stratum: usize, rng_seed: u64) -> Result<Vec<Episode>, EnvError> {
    let free = map.free_cells();
    if free.len() < 2 {
        return Err(EnvError::TooFewFreeCells(free.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut fields: HashMap<CellIndex, DistanceField> = HashMap::new();
    let mut out = Vec::with_capacity(3 * n_per_stratum);
    for stratum in Difficulty::ALL {
        let mut found = 0;
        let mut attempts = 0;
        while found < n_per_stratum {
            if attempts == SAMPLER_ATTEMPTS {
                return Err(EnvError::StratumUnsatisfiable(stratum, attempts));
            }
            attempts += 1;
            let start = free[rng.gen_range(0..free.len())];
            let goal = free[rng.gen_range(0..free.len())];
            let start_heading = Heading::from_index(rng.gen_range(0..NUM_HEADINGS));
            let goal_heading = Heading::from_index(rng.gen_range(0..NUM_HEADINGS));
            if start == goal {
                continue;
            }
            let field = match fields.get(&goal) {
                Some(f) => f,
                None => {
                    let f = DistanceField::from_cell(map, goal)?;
                    fields.entry(goal).or_insert(f)
                }
            };
            let d = field.at_cell(map, start).meters();
            if !stratum.contains(d) {
                continue;
            }
            let sp = map.cell_center(start);
            let gp = map.cell_center(goal);
            out.push(Episode {
                id: format!("{}-{}-{:03}", map.name(), stratum.to_string().to_lowercase(), found),
                map_ref: map.name().to_string(),
                start: Pose::new(sp.x, sp.y, start_heading),
                goal: Pose::new(gp.x, gp.y, goal_heading),
                goal_views: vec![goal_heading],
                shortest_path_length: d,
                max_steps: DEFAULT_MAX_STEPS,
                difficulty: stratum,
            });
            found += 1;
        }
    }
    Ok(out)
}

/// Write episodes as JSON lines.
pub fn write_episodes<W: Write>(mut w: W, episodes: &[Episode]) -> std::io::Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut w, ep)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read JSON-lines episodes; blank lines are skipped.
pub fn read_episodes<R: BufRead>(r: R) -> Result<Vec<Episode>, EnvError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| EnvError::EpisodeFormat { line: i + 1, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode = serde_json::from_str(&line)
            .map_err(|e| EnvError::EpisodeFormat { line: i + 1, msg: e.to_string() })?;
        if ep.max_steps == 0 {
            return Err(EnvError::EpisodeFormat { line: i + 1, msg: "max_steps must be positive".into() });
        }
        out.push(ep.normalized());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::geodesic::geodesic_distance;
    use crate::env::map::{load_map, MapMeta};

    fn open(n: usize, cs: f64) -> GridMap {
        let text: String = (0..n).map(|_| ".".repeat(n) + "\n").collect();
        load_map(&text, &MapMeta { cell_size_m: cs, agent_radius_m: 0.1, name: "open".into() }).unwrap()
    }

    #[test]
    fn strata_boundaries() {
        assert_eq!(Difficulty::classify(1.5), Some(Difficulty::Easy));
        assert_eq!(Difficulty::classify(3.0), Some(Difficulty::Medium));
        assert_eq!(Difficulty::classify(5.0), Some(Difficulty::Hard));
        assert_eq!(Difficulty::classify(10.0), Some(Difficulty::Hard));
        assert_eq!(Difficulty::classify(1.49), None);
        assert_eq!(Difficulty::classify(10.01), None);
    }

    #[test]
    fn open_map_five_per_stratum() {
        let map = open(20, 0.5);
        let eps = sample_episodes(&map, 5, 7).unwrap();
        assert_eq!(eps.len(), 15);
        for s in Difficulty::ALL {
            assert_eq!(eps.iter().filter(|e| e.difficulty == s).count(), 5);
        }
        for e in &eps {
            let d = geodesic_distance(&map, e.start.position(), e.goal.position()).unwrap().meters();
            assert_eq!(d, e.shortest_path_length);
            assert!(e.difficulty.contains(d));
            assert!(map.is_free(e.start.position()) && map.is_free(e.goal.position()));
        }
    }

    #[test]
    fn tiny_map_cannot_fill_easy() {
        let map = open(3, 0.25);
        match sample_episodes(&map, 1, 0) {
            Err(EnvError::StratumUnsatisfiable(Difficulty::Easy, _)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sampler_is_deterministic_and_round_trips() {
        let map = open(20, 0.5);
        let a = sample_episodes(&map, 3, 42).unwrap();
        let b = sample_episodes(&map, 3, 42).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_episodes(&mut ba, &a).unwrap();
        write_episodes(&mut bb, &b).unwrap();
        assert_eq!(ba, bb);
        let back = read_episodes(&ba[..]).unwrap();
        assert_eq!(back, a);
    }
}
