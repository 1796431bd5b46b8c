//! Fast executor: fused structured features, a recurrent actor-critic and
//! its clipped-surrogate trainer.

pub mod features;
pub mod net;
pub mod ppo;
pub mod rollout;
pub mod train;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::EnvError;
use crate::hier::HierError;
use crate::metrics::MetricsError;
use crate::reward::RewardError;

pub use features::{fuse, goal_vec, FeatureError, Observation, FEATURE_WIDTH};
pub use net::{argmax, NetConfig, NetError, PolicyNet};
pub use ppo::{action_log_probs, gae_advantages, loss_and_grad, loss_value, Adam, Batch, LossCoefs, LossStats, PpoError, TrainConfig};
pub use rollout::{oracle_greedy_action, EpisodePool, EpisodeRunner, StepRecord};
pub use train::{evaluate, total_iterations, train, Actor, CurveRow, EvalOutput, TrainOutcome, TrainSetup, TrainState};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Hier(#[from] HierError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("goal unreachable from the start of episode {0}")]
    UnreachableStart(String),
    #[error("loss was non-finite on two consecutive updates")]
    Divergence,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    pub params: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// gradients that vanish analytically from amplifying round-off.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare [`loss_and_grad`] with central finite differences of
/// [`loss_value`] for every parameter.
pub fn gradient_check(net: &PolicyNet<f64>, batch: &Batch<f64>, coefs: LossCoefs<f64>, h: f64) -> Result<GradCheck, PpoError> {
    let (_, analytic) = loss_and_grad(net, batch, coefs)?;
    let mut probe = net.clone();
    let mut out = GradCheck { max_rel_err: 0.0, max_abs_err: 0.0, worst_index: 0, params: analytic.len() };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = loss_value(&probe, batch, coefs)?;
        probe.params_mut()[i] = orig - h;
        let down = loss_value(&probe, batch, coefs)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        out.max_abs_err = out.max_abs_err.max(abs);
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
            out.worst_index = i;
        }
    }
    Ok(out)
}

/// Seeded random batch for gradient checks: inputs and targets uniform in
/// `[-1, 1)`, about 10% episode resets after the first step, and behaviour
/// log-probs jittered by up to 0.4 so some ratios leave the clip range.
pub fn synthetic_batch(net: &PolicyNet<f64>, seed: u64, steps: usize, batch: usize) -> Result<Batch<f64>, NetError> {
    let cfg = *net.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = steps * batch;
    let x = Array2::from_shape_fn((n, cfg.input), |_| rng.gen_range(-1.0..1.0));
    let masks: Vec<f64> = (0..n).map(|i| if i >= batch && rng.gen_bool(0.1) { 0.0 } else { 1.0 }).collect();
    let h0 = (0..cfg.layers).map(|_| Array2::from_shape_fn((batch, cfg.hidden), |_| rng.gen_range(-0.5..0.5))).collect();
    let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..cfg.actions)).collect();
    let advantages = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let returns = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut b = Batch { steps, batch, x, masks, h0, actions, old_logp: vec![0.0; n], advantages, returns };
    let cache = net.forward(b.x.view(), &b.masks, &b.h0, steps, batch)?;
    let lp = action_log_probs(cache.logits.view(), &b.actions);
    b.old_logp = lp.iter().map(|&l| l + rng.gen_range(-0.4..0.4)).collect();
    Ok(b)
}
