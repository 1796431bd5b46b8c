//! Clipped-surrogate policy optimisation: advantages, loss gradient, Adam.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::net::{entropy, log_softmax, NetError, PolicyNet};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum PpoError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid train config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rollout_len: usize,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    /// Decay the step size linearly to zero over the run.
    pub lr_anneal: bool,
    pub adam_eps: f64,
    pub max_grad_norm: f64,
    pub epochs_per_update: usize,
    pub minibatches: usize,
    pub normalize_advantages: bool,
    pub total_env_steps: u64,
    pub n_envs: usize,
    /// Threads stepping environments; results do not depend on it.
    pub workers: usize,
    pub seed: u64,
    /// Iterations between probe evaluations; the last iteration always probes.
    pub probe_every: u64,
    /// Fraction of iterations trained before the wandering penalty switches on.
    pub wsp_warmup_fraction: f64,
    pub patch_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rollout_len: 64,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            discount: 0.99,
            gae_lambda: 0.95,
            learning_rate: 1e-3,
            lr_anneal: true,
            adam_eps: 1e-5,
            max_grad_norm: 0.5,
            epochs_per_update: 4,
            minibatches: 2,
            normalize_advantages: true,
            total_env_steps: 200_000,
            n_envs: 16,
            workers: 1,
            seed: 1,
            probe_every: 20,
            wsp_warmup_fraction: 0.5,
            patch_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(PpoError::InvalidConfig("clip must lie in (0, 1)"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(PpoError::InvalidConfig("discount must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(PpoError::InvalidConfig("gae_lambda must lie in [0, 1]"));
        }
        if self.rollout_len == 0 || self.n_envs == 0 || self.epochs_per_update == 0 || self.workers == 0 {
            return Err(PpoError::InvalidConfig("sizes must be positive"));
        }
        if self.minibatches == 0 || self.n_envs % self.minibatches != 0 {
            return Err(PpoError::InvalidConfig("minibatches must divide n_envs"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PpoError::InvalidConfig("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.patch_dropout) || !(0.0..=1.0).contains(&self.wsp_warmup_fraction) {
            return Err(PpoError::InvalidConfig("fractions must lie in [0, 1]"));
        }
        if self.probe_every == 0 {
            return Err(PpoError::InvalidConfig("probe_every must be positive"));
        }
        Ok(())
    }
}

/// Generalized advantage estimation over one sequence.
///
/// `dones[t]` marks that the episode ended at step `t`, so nothing after it
/// is bootstrapped; `bootstrap` is the value of the state after the last
/// step. Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae_advantages<S: Scalar>(
    rewards: &[S],
    values: &[S],
    dones: &[bool],
    bootstrap: S,
    discount: S,
    lambda: S,
) -> (Vec<S>, Vec<S>) {
    assert!(rewards.len() == values.len() && values.len() == dones.len(), "equal lengths");
    let n = rewards.len();
    let mut adv = vec![S::zero(); n];
    let mut next_value = bootstrap;
    let mut next_adv = S::zero();
    for t in (0..n).rev() {
        let live = if dones[t] { S::zero() } else { S::one() };
        let delta = rewards[t] + discount * next_value * live - values[t];
        next_adv = delta + discount * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    (adv, ret)
}

/// In-place advantage whitening.
pub fn normalize<S: Scalar>(v: &mut [S]) {
    if v.len() < 2 {
        return;
    }
    let n = S::lit(v.len() as f64);
    let mean = v.iter().copied().sum::<S>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    let sd = var.sqrt() + S::lit(1e-8);
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

/// A time-major minibatch of `steps x batch` transitions.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub steps: usize,
    pub batch: usize,
    pub x: Array2<S>,
    pub masks: Vec<S>,
    pub h0: Vec<Array2<S>>,
    pub actions: Vec<usize>,
    pub old_logp: Vec<S>,
    pub advantages: Vec<S>,
    pub returns: Vec<S>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl LossStats {
    fn add(&mut self, o: &LossStats, w: f64) {
        self.loss += w * o.loss;
        self.policy_loss += w * o.policy_loss;
        self.value_loss += w * o.value_loss;
        self.entropy += w * o.entropy;
        self.clip_fraction += w * o.clip_fraction;
    }
}

/// Coefficients of the objective.
#[derive(Debug, Clone, Copy)]
pub struct LossCoefs<S> {
    pub clip: S,
    pub entropy: S,
    pub value: S,
}

impl<S: Scalar> LossCoefs<S> {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self { clip: S::lit(cfg.clip), entropy: S::lit(cfg.entropy_coef), value: S::lit(cfg.value_coef) }
    }
}

/// Loss `-mean(min(rho A, clip(rho) A)) + c_v mean((V - R)^2) - c_e mean(H)`
/// and its gradient with respect to every parameter.
pub fn loss_and_grad<S: Scalar>(
    net: &PolicyNet<S>,
    batch: &Batch<S>,
    coefs: LossCoefs<S>,
) -> Result<(LossStats, Vec<S>), PpoError> {
    let cache = net.forward(batch.x.view(), &batch.masks, &batch.h0, batch.steps, batch.batch)?;
    if !cache.is_finite() {
        return Err(NetError::NonFiniteActivation.into());
    }
    let n = batch.steps * batch.batch;
    let inv_n = S::one() / S::lit(n as f64);
    let na = cache.logits.ncols();
    let mut dlogits = Array2::<S>::zeros((n, na));
    let mut dvalues = vec![S::zero(); n];
    let (mut pl, mut vl, mut ent, mut clipped) = (S::zero(), S::zero(), S::zero(), 0usize);
    let (lo, hi) = (S::one() - coefs.clip, S::one() + coefs.clip);
    for i in 0..n {
        let logits = cache.logits.row(i);
        let lp = log_softmax(logits.as_slice().expect("contiguous"));
        let p: Vec<S> = lp.iter().map(|&l| l.exp()).collect();
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (lp[a] - batch.old_logp[i]).exp();
        let unclipped = ratio * adv;
        let clipped_obj = ratio.max(lo).min(hi) * adv;
        // gradient of the surrogate w.r.t. log pi(a): rho A on the unclipped branch
        let g = if unclipped <= clipped_obj {
            ratio * adv
        } else {
            clipped += 1;
            S::zero()
        };
        pl -= unclipped.min(clipped_obj);
        let h = entropy(&p);
        ent += h;
        let dv = cache.values[i] - batch.returns[i];
        vl += dv * dv;
        for j in 0..na {
            let onehot = if j == a { S::one() } else { S::zero() };
            let d_surr = -g * (onehot - p[j]);
            // dH/dlogit_j = -p_j (ln p_j + H)
            let d_ent = coefs.entropy * p[j] * (lp[j] + h);
            dlogits[[i, j]] = (d_surr + d_ent) * inv_n;
        }
        dvalues[i] = coefs.value * S::lit(2.0) * dv * inv_n;
    }
    let mut grad = vec![S::zero(); net.num_params()];
    net.backward(&cache, dlogits.view(), &dvalues, &mut grad);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(PpoError::NonFiniteGradient);
    }
    let (pl, vl, ent) = (pl * inv_n, vl * inv_n, ent * inv_n);
    let loss = pl + coefs.value * vl - coefs.entropy * ent;
    Ok((
        LossStats {
            loss: loss.to_f64_lossy(),
            policy_loss: pl.to_f64_lossy(),
            value_loss: vl.to_f64_lossy(),
            entropy: ent.to_f64_lossy(),
            clip_fraction: clipped as f64 / n as f64,
        },
        grad,
    ))
}

/// Scalar loss only; used by finite-difference checks.
pub fn loss_value<S: Scalar>(net: &PolicyNet<S>, batch: &Batch<S>, coefs: LossCoefs<S>) -> Result<S, PpoError> {
    let cache = net.forward(batch.x.view(), &batch.masks, &batch.h0, batch.steps, batch.batch)?;
    let n = batch.steps * batch.batch;
    let (lo, hi) = (S::one() - coefs.clip, S::one() + coefs.clip);
    let mut total = S::zero();
    for i in 0..n {
        let lp = log_softmax(cache.logits.row(i).as_slice().expect("contiguous"));
        let p: Vec<S> = lp.iter().map(|&l| l.exp()).collect();
        let ratio = (lp[batch.actions[i]] - batch.old_logp[i]).exp();
        let adv = batch.advantages[i];
        let surr = (ratio * adv).min(ratio.max(lo).min(hi) * adv);
        let dv = cache.values[i] - batch.returns[i];
        total += -surr + coefs.value * dv * dv - coefs.entropy * entropy(&p);
    }
    Ok(total / S::lit(n as f64))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Adam<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    pub t: u64,
    pub m: Vec<S>,
    pub v: Vec<S>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(n: usize, lr: S, eps: S) -> Self {
        Self { lr, beta1: S::lit(0.9), beta2: S::lit(0.999), eps, t: 0, m: vec![S::zero(); n], v: vec![S::zero(); n] }
    }

    pub fn step(&mut self, params: &mut [S], grad: &[S]) {
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = S::one() - self.beta1.powi(t);
        let c2 = S::one() - self.beta2.powi(t);
        let step = self.lr * c2.sqrt() / c1;
        for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (S::one() - self.beta1) * g;
            *v = self.beta2 * *v + (S::one() - self.beta2) * g * g;
            *p -= step * *m / (v.sqrt() + self.eps * c2.sqrt());
        }
    }
}

/// Scale `grad` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grad: &mut [S], max_norm: S) -> S {
    let norm = grad.iter().map(|&g| g * g).sum::<S>().sqrt();
    if norm > max_norm && norm > S::zero() {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One optimisation pass: for every epoch, one Adam step per minibatch.
pub fn ppo_update<S: Scalar>(
    net: &mut PolicyNet<S>,
    opt: &mut Adam<S>,
    minibatches: &[Batch<S>],
    cfg: &TrainConfig,
) -> Result<LossStats, PpoError> {
    let coefs = LossCoefs::from_config(cfg);
    let mut stats = LossStats::default();
    let w = 1.0 / (cfg.epochs_per_update * minibatches.len()) as f64;
    for _ in 0..cfg.epochs_per_update {
        for mb in minibatches {
            let (s, mut grad) = loss_and_grad(net, mb, coefs)?;
            clip_grad_norm(&mut grad, S::lit(cfg.max_grad_norm));
            opt.step(net.params_mut(), &grad);
            stats.add(&s, w);
        }
    }
    Ok(stats)
}

/// `log pi(a)` for each row of `logits`.
pub fn action_log_probs<S: Scalar>(logits: ArrayView2<'_, S>, actions: &[usize]) -> Vec<S> {
    logits
        .rows()
        .into_iter()
        .zip(actions)
        .map(|(row, &a)| log_softmax(row.as_slice().expect("contiguous"))[a])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::net::NetConfig;
    use crate::policy::synthetic_batch;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gae_zero_case() {
        let (a, r) = gae_advantages(&[0.0; 5], &[0.0; 5], &[false; 5], 0.0, 0.99, 0.95);
        assert_eq!(a, vec![0.0; 5]);
        assert_eq!(r, vec![0.0; 5]);
    }

    #[test]
    fn gae_single_terminal_step() {
        let (a, r) = gae_advantages(&[1.0], &[0.0], &[true], 123.0, 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn gae_zero_discount_is_td_residual() {
        let rw = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, -0.3];
        let (a, _) = gae_advantages(&rw, &v, &[false, true, false], 9.0, 0.0, 0.95);
        for t in 0..3 {
            assert_eq!(a[t], rw[t] - v[t]);
        }
    }

    proptest! {
        #[test]
        fn gae_matches_lambda_return_sum(
            rw in proptest::collection::vec(-1.0f64..1.0, 1..20),
            seed in 0u64..100,
            gamma in 0.5f64..1.0, lam in 0.0f64..1.0,
        ) {
            let n = rw.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
            let boot = rng.gen_range(-1.0..1.0);
            let (a, r) = gae_advantages(&rw, &v, &d, boot, gamma, lam);
            // direct sum of discounted TD residuals, truncated at episode ends
            for t in 0..n {
                let mut acc = 0.0;
                let mut w = 1.0;
                for u in t..n {
                    let next = if u + 1 < n { v[u + 1] } else { boot };
                    let live = if d[u] { 0.0 } else { 1.0 };
                    acc += w * (rw[u] + gamma * next * live - v[u]);
                    if d[u] { break; }
                    w *= gamma * lam;
                }
                prop_assert!((a[t] - acc).abs() < 1e-9);
                prop_assert!((r[t] - a[t] - v[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_advantages_only_value_and_entropy_move() {
        let net = PolicyNet::<f64>::init(NetConfig::tiny(), 5);
        let mut b = synthetic_batch(&net, 1, 4, 2).unwrap();
        b.advantages.fill(0.0);
        let coefs = LossCoefs { clip: 0.2, entropy: 0.0, value: 0.5 };
        let (s, g) = loss_and_grad(&net, &b, coefs).unwrap();
        assert_eq!(s.policy_loss, 0.0);
        // with no entropy term the actor head receives no gradient
        let actor = 200 - 16 - 4;
        assert!(g[actor..actor + 16].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ratio_one_gives_weighted_log_prob_gradient() {
        let net = PolicyNet::<f64>::init(NetConfig::tiny(), 6);
        let mut b = synthetic_batch(&net, 2, 3, 2).unwrap();
        let cache = net.forward(b.x.view(), &b.masks, &b.h0, 3, 2).unwrap();
        b.old_logp = action_log_probs(cache.logits.view(), &b.actions);
        let coefs = LossCoefs { clip: 0.2, entropy: 0.0, value: 0.0 };
        let (_, g) = loss_and_grad(&net, &b, coefs).unwrap();
        // reference: -mean(A * grad log pi(a)), via backward with dlogits = -A (onehot - p) / n
        let n = 6.0;
        let mut dl = Array2::zeros((6, 4));
        for i in 0..6 {
            let p = crate::policy::net::softmax(cache.logits.row(i).as_slice().unwrap());
            for j in 0..4 {
                let oh = if j == b.actions[i] { 1.0 } else { 0.0 };
                dl[[i, j]] = -b.advantages[i] * (oh - p[j]) / n;
            }
        }
        let mut g_ref = vec![0.0; 200];
        net.backward(&cache, dl.view(), &[0.0; 6], &mut g_ref);
        for (a, r) in g.iter().zip(&g_ref) {
            assert!((a - r).abs() < 1e-14);
        }
    }

    #[test]
    fn clip_fraction_counts_active_clips() {
        let net = PolicyNet::<f64>::init(NetConfig::tiny(), 8);
        let mut b = synthetic_batch(&net, 4, 4, 2).unwrap();
        let cache = net.forward(b.x.view(), &b.masks, &b.h0, 4, 2).unwrap();
        let lp = action_log_probs(cache.logits.view(), &b.actions);
        // ratio = e^1 > 1.2 everywhere: positive advantages are clipped
        b.old_logp = lp.iter().map(|l| l - 1.0).collect();
        b.advantages = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (s, _) = loss_and_grad(&net, &b, LossCoefs { clip: 0.2, entropy: 0.01, value: 0.5 }).unwrap();
        assert_eq!(s.clip_fraction, 0.5);
    }

    #[test]
    fn loss_value_agrees_with_stats() {
        let net = PolicyNet::<f64>::init(NetConfig::tiny(), 10);
        let b = synthetic_batch(&net, 11, 5, 3).unwrap();
        let coefs = LossCoefs { clip: 0.2, entropy: 0.01, value: 0.5 };
        let (s, _) = loss_and_grad(&net, &b, coefs).unwrap();
        assert!((loss_value(&net, &b, coefs).unwrap() - s.loss).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0f64, -2.0];
        let mut opt = Adam::new(2, 0.1, 1e-12);
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 1.9).abs() < 1e-9);
    }

    #[test]
    fn grad_clip() {
        let mut g = vec![3.0f64, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
