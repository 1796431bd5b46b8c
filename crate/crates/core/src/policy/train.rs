//! Rollout collection, the optimisation loop and batched evaluation.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{patch_dropout, FEATURE_WIDTH};
use super::net::{argmax, log_softmax, sample_categorical, softmax, NetConfig, PolicyNet};
use super::ppo::{gae_advantages, normalize, ppo_update, Adam, Batch, LossStats, PpoError, TrainConfig};
use super::rollout::{oracle_greedy_action, EpisodePool, EpisodeRunner, StepRecord};
use super::PolicyError;
use crate::env::Action;
use crate::hier::{HierConfig, HierController, PlannerEvent};
use crate::metrics::{sr, spl, EpisodeResult};
use crate::reward::{wsp_schedule, RewardConfig};
use crate::scalar::Scalar;

/// Everything a training run reads.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a> {
    pub train: &'a EpisodePool,
    pub probe: &'a EpisodePool,
    pub hier: &'a HierConfig,
    pub reward: &'a RewardConfig<f64>,
    pub net: NetConfig,
    pub cfg: &'a TrainConfig,
}

/// Resumable optimisation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TrainState<S> {
    pub net: PolicyNet<S>,
    pub adam: Adam<S>,
    /// Next iteration to run.
    pub iteration: u64,
    pub env_steps: u64,
}

impl<S: Scalar> TrainState<S> {
    pub fn fresh(net: NetConfig, cfg: &TrainConfig) -> Self {
        let net = PolicyNet::init(net, cfg.seed);
        let adam = Adam::new(net.num_params(), S::lit(cfg.learning_rate), S::lit(cfg.adam_eps));
        Self { net, adam, iteration: 0, env_steps: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: u64,
    pub env_steps: u64,
    /// Mean per-step reward over the iteration's rollout.
    pub mean_reward: f64,
    /// Present on probe iterations only.
    pub probe_sr: Option<f64>,
    pub probe_spl: Option<f64>,
    pub wsp_enabled: bool,
    /// Mean weighted wandering penalty per step; exactly 0 while disabled.
    pub mean_wsp: f64,
    pub stats: LossStats,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub state: TrainState<S>,
    pub curve: Vec<CurveRow>,
    pub final_probe: Vec<EpisodeResult<f64>>,
}

pub fn total_iterations(cfg: &TrainConfig) -> u64 {
    let per = (cfg.rollout_len * cfg.n_envs) as u64;
    cfg.total_env_steps.div_ceil(per).max(1)
}

/// Deterministic seed derivation for independent streams.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Slot {
    runner: EpisodeRunner,
    rng: ChaCha8Rng,
}

impl Slot {
    fn new(pool: &EpisodePool, hier: &HierConfig, reward: &RewardConfig<f64>, seed: u64) -> Result<Self, PolicyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (map, ep, field) = pool.get(rng.gen_range(0..pool.len()));
        let runner = EpisodeRunner::new(map, ep.clone(), field, HierController::from_config(hier)?, *reward)?;
        Ok(Self { runner, rng })
    }

    /// Step, start the next episode on termination and write the next
    /// observation into `obs`.
    fn advance<S: Scalar>(
        &mut self,
        action: Action,
        pool: &EpisodePool,
        dropout: f64,
        obs: &mut [S],
    ) -> Result<(StepRecord, Option<EpisodeResult<f64>>), PolicyError> {
        let rec = self.runner.apply(action)?;
        let finished = if rec.done {
            let res = self.runner.result();
            let (map, ep, field) = pool.get(self.rng.gen_range(0..pool.len()));
            self.runner.reset(map, ep.clone(), field)?;
            Some(res)
        } else {
            None
        };
        self.observe(dropout, obs)?;
        Ok((rec, finished))
    }

    fn observe<S: Scalar>(&mut self, dropout: f64, obs: &mut [S]) -> Result<(), PolicyError> {
        self.runner.features_into(obs)?;
        patch_dropout(obs, dropout, &mut self.rng);
        Ok(())
    }
}

type Advanced = Result<(StepRecord, Option<EpisodeResult<f64>>), PolicyError>;

/// Step every slot; slots are split across `workers` threads. Output order
/// and content do not depend on the worker count.
fn advance_all<S: Scalar>(
    slots: &mut [Slot],
    actions: &[Action],
    pool: &EpisodePool,
    dropout: f64,
    obs: &mut Array2<S>,
    workers: usize,
) -> Vec<Advanced> {
    let width = obs.ncols();
    let flat = obs.as_slice_mut().expect("standard layout");
    if workers <= 1 || slots.len() < 2 {
        return slots
            .iter_mut()
            .zip(actions)
            .zip(flat.chunks_mut(width))
            .map(|((s, &a), row)| s.advance(a, pool, dropout, row))
            .collect();
    }
    let per = slots.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = slots
            .chunks_mut(per)
            .zip(actions.chunks(per))
            .zip(flat.chunks_mut(per * width))
            .map(|((ss, aa), rows)| {
                scope.spawn(move || {
                    ss.iter_mut()
                        .zip(aa)
                        .zip(rows.chunks_mut(width))
                        .map(|((s, &a), row)| s.advance(a, pool, dropout, row))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Train with the clipped surrogate; `on_row` sees every curve row as it is
/// produced. Single-worker and multi-worker runs are identical.
pub fn train<S: Scalar>(
    setup: &TrainSetup<'_>,
    resume: Option<TrainState<S>>,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<TrainOutcome<S>, PolicyError> {
    let cfg = setup.cfg;
    cfg.validate()?;
    if setup.net.input != FEATURE_WIDTH {
        return Err(PolicyError::InvalidConfig(format!("net input must be {FEATURE_WIDTH}")));
    }
    if setup.train.is_empty() || setup.probe.is_empty() {
        return Err(PolicyError::InvalidConfig("episode pools must be non-empty".into()));
    }
    let iters = total_iterations(cfg);
    let mut state = match resume {
        Some(s) => s,
        None => TrainState::fresh(setup.net, cfg),
    };
    if state.net.config() != &setup.net {
        return Err(PolicyError::InvalidConfig("checkpoint network shape differs from config".into()));
    }
    let (t_len, n_envs) = (cfg.rollout_len, cfg.n_envs);
    let start = state.iteration;
    let mut act_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, start, 0));
    let mut slots = (0..n_envs)
        .map(|i| Slot::new(setup.train, setup.hier, setup.reward, derive_seed(cfg.seed, start, i as u64 + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut obs = Array2::<S>::zeros((n_envs, FEATURE_WIDTH));
    for (slot, mut row) in slots.iter_mut().zip(obs.rows_mut()) {
        slot.observe(cfg.patch_dropout, row.as_slice_mut().expect("contiguous"))?;
    }
    let mut hidden = state.net.zero_hidden(n_envs);
    let mut fresh = vec![true; n_envs];
    let mut curve = Vec::new();
    let mut final_probe = Vec::new();
    let mut bad_updates = 0;

    for it in start..iters {
        let wsp = setup.reward.wsp_enabled && wsp_schedule(it, iters, cfg.wsp_warmup_fraction);
        for s in &mut slots {
            s.runner.set_wsp_enabled(wsp);
        }
        let h_start = hidden.clone();
        let n = t_len * n_envs;
        let mut x = Array2::<S>::zeros((n, FEATURE_WIDTH));
        let mut masks = vec![S::one(); n];
        let mut actions = vec![0usize; n];
        let mut logp = vec![S::zero(); n];
        let mut values = vec![S::zero(); n];
        let mut rewards = vec![S::zero(); n];
        let mut dones = vec![false; n];
        let mut reward_sum = 0.0;
        let mut wsp_sum = 0.0;

        for t in 0..t_len {
            let rows = t * n_envs..(t + 1) * n_envs;
            let m: Vec<S> = fresh.iter().map(|&f| if f { S::zero() } else { S::one() }).collect();
            let c = state.net.forward(obs.view(), &m, &hidden, 1, n_envs)?;
            if !c.is_finite() {
                return Err(PolicyError::Divergence);
            }
            hidden = c.final_hidden();
            x.slice_mut(s![rows.clone(), ..]).assign(&obs);
            masks[rows.clone()].copy_from_slice(&m);
            let mut acts = Vec::with_capacity(n_envs);
            for b in 0..n_envs {
                let lg = c.logits.row(b);
                let lg = lg.as_slice().expect("contiguous");
                let a = sample_categorical(&softmax(lg), &mut act_rng);
                let i = t * n_envs + b;
                actions[i] = a;
                logp[i] = log_softmax(lg)[a];
                values[i] = c.values[b];
                acts.push(Action::from_index(a).expect("action index"));
            }
            let out = advance_all(&mut slots, &acts, setup.train, cfg.patch_dropout, &mut obs, cfg.workers);
            for (b, r) in out.into_iter().enumerate() {
                let (rec, _) = r?;
                let i = t * n_envs + b;
                rewards[i] = S::lit(rec.reward.total);
                reward_sum += rec.reward.total;
                wsp_sum += rec.reward.wsp_path_term + rec.reward.wsp_revisit_term;
                dones[i] = rec.done;
                fresh[b] = rec.done;
            }
        }
        let m: Vec<S> = fresh.iter().map(|&f| if f { S::zero() } else { S::one() }).collect();
        let boot = state.net.forward(obs.view(), &m, &hidden, 1, n_envs)?.values;

        let mut adv = vec![S::zero(); n];
        let mut ret = vec![S::zero(); n];
        for b in 0..n_envs {
            let col = |v: &[S]| (0..t_len).map(|t| v[t * n_envs + b]).collect::<Vec<S>>();
            let d: Vec<bool> = (0..t_len).map(|t| dones[t * n_envs + b]).collect();
            let (a, r) = gae_advantages(
                &col(&rewards),
                &col(&values),
                &d,
                boot[b],
                S::lit(cfg.discount),
                S::lit(cfg.gae_lambda),
            );
            for t in 0..t_len {
                adv[t * n_envs + b] = a[t];
                ret[t * n_envs + b] = r[t];
            }
        }
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }
        let group = n_envs / cfg.minibatches;
        let minibatches: Vec<Batch<S>> = (0..cfg.minibatches)
            .map(|g| {
                let envs: Vec<usize> = (g * group..(g + 1) * group).collect();
                let idx: Vec<usize> = (0..t_len).flat_map(|t| envs.iter().map(move |&b| t * n_envs + b)).collect();
                Batch {
                    steps: t_len,
                    batch: group,
                    x: x.select(ndarray::Axis(0), &idx),
                    masks: idx.iter().map(|&i| masks[i]).collect(),
                    h0: h_start.iter().map(|h| h.select(ndarray::Axis(0), &envs)).collect(),
                    actions: idx.iter().map(|&i| actions[i]).collect(),
                    old_logp: idx.iter().map(|&i| logp[i]).collect(),
                    advantages: idx.iter().map(|&i| adv[i]).collect(),
                    returns: idx.iter().map(|&i| ret[i]).collect(),
                }
            })
            .collect();

        if cfg.lr_anneal {
            let frac = 1.0 - it as f64 / iters as f64;
            state.adam.lr = S::lit(cfg.learning_rate * frac);
        }
        let snapshot = (state.net.clone(), state.adam.clone());
        let stats = match ppo_update(&mut state.net, &mut state.adam, &minibatches, cfg) {
            Ok(s) if s.loss.is_finite() => {
                bad_updates = 0;
                s
            }
            Ok(_) | Err(PpoError::NonFiniteGradient) | Err(PpoError::Net(_)) => {
                (state.net, state.adam) = snapshot;
                bad_updates += 1;
                if bad_updates >= 2 {
                    return Err(PolicyError::Divergence);
                }
                LossStats { loss: f64::NAN, ..LossStats::default() }
            }
            Err(e) => return Err(e.into()),
        };
        state.iteration = it + 1;
        state.env_steps += n as u64;

        let probe_now = state.iteration % cfg.probe_every == 0 || state.iteration == iters;
        let (probe_sr, probe_spl) = if probe_now {
            let out = evaluate(&Actor::Net(&state.net), setup.probe, setup.hier, setup.reward, n_envs, false)?;
            let (a, b) = (sr(&out.results)?, spl(&out.results)?);
            final_probe = out.results;
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        let row = CurveRow {
            iteration: it,
            env_steps: state.env_steps,
            mean_reward: reward_sum / n as f64,
            probe_sr,
            probe_spl,
            wsp_enabled: wsp,
            mean_wsp: wsp_sum / n as f64,
            stats,
        };
        on_row(&row);
        curve.push(row);
    }
    Ok(TrainOutcome { state, curve, final_probe })
}

/// Who picks the actions during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Actor<'a, S> {
    /// Greedy (argmax) actions of a trained network.
    Net(&'a PolicyNet<S>),
    /// Shortest-path follower that ignores the plan.
    OracleGreedy,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOutput {
    pub results: Vec<EpisodeResult<f64>>,
    /// Per episode, in pool order; empty unless recording.
    pub trajectories: Vec<Vec<StepRecord>>,
    pub events: Vec<Vec<PlannerEvent>>,
}

/// Run every episode of `pool` to termination, `batch` episodes at a time.
pub fn evaluate<S: Scalar>(
    actor: &Actor<'_, S>,
    pool: &EpisodePool,
    hier: &HierConfig,
    reward: &RewardConfig<f64>,
    batch: usize,
    record: bool,
) -> Result<EvalOutput, PolicyError> {
    let batch = batch.max(1);
    let mut out = EvalOutput::default();
    let mut start = 0;
    while start < pool.len() {
        let end = (start + batch).min(pool.len());
        let mut runners = (start..end)
            .map(|i| {
                let (map, ep, field) = pool.get(i);
                EpisodeRunner::new(map, ep.clone(), field, HierController::from_config(hier)?, *reward)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let b = runners.len();
        let mut traj: Vec<Vec<StepRecord>> = vec![Vec::new(); b];
        let mut hidden = match actor {
            Actor::Net(net) => net.zero_hidden(b),
            Actor::OracleGreedy => Vec::new(),
        };
        let mut x = Array2::<S>::zeros((b, FEATURE_WIDTH));
        while runners.iter().any(|r| !r.is_done()) {
            let actions: Vec<Option<Action>> = match actor {
                Actor::Net(net) => {
                    for (r, mut row) in runners.iter_mut().zip(x.rows_mut()) {
                        if !r.is_done() {
                            r.features_into(row.as_slice_mut().expect("contiguous"))?;
                        }
                    }
                    let c = net.forward(x.view(), &vec![S::one(); b], &hidden, 1, b)?;
                    if !c.is_finite() {
                        return Err(PolicyError::Divergence);
                    }
                    hidden = c.final_hidden();
                    runners
                        .iter()
                        .zip(c.logits.rows())
                        .map(|(r, lg)| {
                            (!r.is_done()).then(|| {
                                Action::from_index(argmax(lg.as_slice().expect("contiguous"))).expect("action")
                            })
                        })
                        .collect()
                }
                Actor::OracleGreedy => runners
                    .iter_mut()
                    .map(|r| {
                        if r.is_done() {
                            return Ok(None);
                        }
                        r.plan()?;
                        let env = r.env();
                        Ok(Some(oracle_greedy_action(env.map(), env.field(), env.pose(), reward.d_s)))
                    })
                    .collect::<Result<_, PolicyError>>()?,
            };
            for ((r, a), tr) in runners.iter_mut().zip(actions).zip(traj.iter_mut()) {
                if let Some(a) = a {
                    let rec = r.apply(a)?;
                    if record {
                        tr.push(rec);
                    }
                }
            }
        }
        for (r, tr) in runners.iter().zip(traj) {
            out.results.push(r.result());
            if record {
                out.trajectories.push(tr);
                out.events.push(r.events().to_vec());
            }
        }
        start = end;
    }
    Ok(out)
}
