//! Recurrent actor-critic with hand-written backpropagation through time.
//!
//! Layout: `tanh` encoder, a stack of gated recurrent units, a linear actor
//! head and a linear critic head reading the top hidden state. Weights are
//! stored row-major as `(out, in)` in one flat parameter vector; the GRU
//! gates are ordered `r, z, n` with the reset gate applied to the hidden
//! projection of the candidate:
//!
//! ```text
//! r  = sigmoid(W_ir u + b_ir + W_hr h + b_hr)
//! z  = sigmoid(W_iz u + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in u + b_in + r * (W_hn h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```
//!
//! Sequences are laid out time-major: row `t * batch + b`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::FEATURE_WIDTH;
use crate::env::Action;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("non-finite activation")]
    NonFiniteActivation,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub input: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub actions: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { input: FEATURE_WIDTH, embed: 64, hidden: 128, layers: 2, actions: Action::COUNT }
    }
}

impl NetConfig {
    /// Smallest two-layer shape with exactly 200 parameters.
    pub fn tiny() -> Self {
        Self { input: 11, embed: 3, hidden: 3, layers: 2, actions: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
    out: usize,
    inp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Gru {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    inp: usize,
    hid: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    enc: Dense,
    gru: Vec<Gru>,
    actor: Dense,
    critic: Dense,
    len: usize,
}

impl Layout {
    pub fn new(cfg: &NetConfig) -> Self {
        let mut off = 0;
        let mut dense = |out: usize, inp: usize| {
            let d = Dense { w: off, b: off + out * inp, out, inp };
            off += out * inp + out;
            d
        };
        let enc = dense(cfg.embed, cfg.input);
        let mut gru = Vec::with_capacity(cfg.layers);
        let mut inp = cfg.embed;
        for _ in 0..cfg.layers {
            let h3 = 3 * cfg.hidden;
            let w_ih = dense(h3, inp);
            let w_hh = dense(h3, cfg.hidden);
            gru.push(Gru { w_ih: w_ih.w, b_ih: w_ih.b, w_hh: w_hh.w, b_hh: w_hh.b, inp, hid: cfg.hidden });
            inp = cfg.hidden;
        }
        let actor = dense(cfg.actions, cfg.hidden);
        let critic = dense(1, cfg.hidden);
        Self { enc, gru, actor, critic, len: off }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn mat<S>(p: &[S], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, S> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout in bounds")
}

fn mat_mut<S>(p: &mut [S], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, S> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[off..off + rows * cols]).expect("layout in bounds")
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// `y = x W^T + b`.
fn affine<S: Scalar>(x: &ArrayView2<'_, S>, p: &[S], d: Dense) -> Array2<S> {
    let mut y = Array2::from_shape_fn((x.nrows(), d.out), |(_, j)| p[d.b + j]);
    general_mat_mul(S::one(), x, &mat(p, d.w, d.out, d.inp).t(), S::one(), &mut y);
    y
}

/// Accumulate `dW += dy^T x`, `db += colsum(dy)`.
fn affine_grad<S: Scalar>(x: &ArrayView2<'_, S>, dy: &ArrayView2<'_, S>, g: &mut [S], d: Dense) {
    general_mat_mul(S::one(), &dy.t(), x, S::one(), &mut mat_mut(g, d.w, d.out, d.inp));
    for row in dy.rows() {
        for (j, &v) in row.iter().enumerate() {
            g[d.b + j] += v;
        }
    }
}

/// Intermediate values of one GRU layer over a sequence.
#[derive(Debug, Clone)]
struct GruCache<S> {
    /// Previous hidden after the episode mask.
    h_prev: Array2<S>,
    r: Array2<S>,
    z: Array2<S>,
    n: Array2<S>,
    /// `W_hn h + b_hn`.
    ghn: Array2<S>,
    out: Array2<S>,
}

/// Forward pass record needed by [`PolicyNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    steps: usize,
    batch: usize,
    x: Array2<S>,
    masks: Vec<S>,
    e: Array2<S>,
    layers: Vec<GruCache<S>>,
    pub logits: Array2<S>,
    pub values: Array1<S>,
}

impl<S: Scalar> ForwardCache<S> {
    /// Hidden state of every layer after the last step, each `batch x hidden`.
    pub fn final_hidden(&self) -> Vec<Array2<S>> {
        let from = (self.steps - 1) * self.batch;
        self.layers.iter().map(|l| l.out.slice(s![from.., ..]).to_owned()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().chain(self.values.iter()).all(|v| v.is_finite())
    }
}

/// Actor-critic network owning its flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PolicyNet<S> {
    cfg: NetConfig,
    #[serde(skip)]
    layout: Option<Layout>,
    params: Vec<S>,
}

impl<S: Scalar> PolicyNet<S> {
    pub fn zeros(cfg: NetConfig) -> Self {
        let layout = Layout::new(&cfg);
        let params = vec![S::zero(); layout.len()];
        Self { cfg, layout: Some(layout), params }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialisation; the actor head is scaled
    /// down so the initial policy is close to uniform.
    pub fn init(cfg: NetConfig, seed: u64) -> Self {
        let mut net = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = net.layout().clone();
        let mut fill = |p: &mut [S], d: Dense, gain: f64| {
            let bound = gain / (d.inp as f64).sqrt();
            for v in &mut p[d.w..d.w + d.out * d.inp] {
                *v = S::lit(rng.gen_range(-bound..=bound));
            }
        };
        fill(&mut net.params, layout.enc, 1.0);
        for g in &layout.gru {
            let h3 = 3 * g.hid;
            fill(&mut net.params, Dense { w: g.w_ih, b: g.b_ih, out: h3, inp: g.inp }, 1.0);
            fill(&mut net.params, Dense { w: g.w_hh, b: g.b_hh, out: h3, inp: g.hid }, 1.0);
        }
        fill(&mut net.params, layout.actor, 0.01);
        fill(&mut net.params, layout.critic, 1.0);
        net
    }

    pub fn from_params(cfg: NetConfig, params: Vec<S>) -> Result<Self, NetError> {
        let layout = Layout::new(&cfg);
        if params.len() != layout.len() {
            return Err(NetError::ShapeMismatch(format!("{} params for a {}-param net", params.len(), layout.len())));
        }
        Ok(Self { cfg, layout: Some(layout), params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    fn layout(&self) -> &Layout {
        self.layout.as_ref().expect("layout is rebuilt on load")
    }

    /// Rebuild the layout after deserialisation.
    pub fn restore_layout(&mut self) -> Result<(), NetError> {
        let layout = Layout::new(&self.cfg);
        if layout.len() != self.params.len() {
            return Err(NetError::ShapeMismatch("checkpoint parameter count".into()));
        }
        self.layout = Some(layout);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn zero_hidden(&self, batch: usize) -> Vec<Array2<S>> {
        vec![Array2::zeros((batch, self.cfg.hidden)); self.cfg.layers]
    }

    /// Run `steps` time steps for `batch` sequences.
    ///
    /// `x` is `(steps * batch) x input`; `masks[i]` multiplies the hidden
    /// state entering row `i` (0 at episode starts); `h0` holds one
    /// `batch x hidden` state per layer.
    pub fn forward(
        &self,
        x: ArrayView2<'_, S>,
        masks: &[S],
        h0: &[Array2<S>],
        steps: usize,
        batch: usize,
    ) -> Result<ForwardCache<S>, NetError> {
        let n = steps * batch;
        if x.dim() != (n, self.cfg.input) || masks.len() != n || h0.len() != self.cfg.layers {
            return Err(NetError::ShapeMismatch(format!(
                "x {:?}, {} masks, {} hidden for {steps}x{batch}",
                x.dim(),
                masks.len(),
                h0.len()
            )));
        }
        if h0.iter().any(|h| h.dim() != (batch, self.cfg.hidden)) {
            return Err(NetError::ShapeMismatch("hidden state".into()));
        }
        let p = &self.params[..];
        let layout = self.layout();
        let mut e = affine(&x, p, layout.enc);
        e.mapv_inplace(|v| v.tanh());
        let mut layers: Vec<GruCache<S>> = Vec::with_capacity(self.cfg.layers);
        for (l, g) in layout.gru.iter().enumerate() {
            let input = if l == 0 { e.view() } else { layers[l - 1].out.view() };
            let c = self.gru_forward(*g, &input, masks, &h0[l], steps, batch);
            layers.push(c);
        }
        let top = layers.last().map(|c| c.out.view()).expect("at least one layer");
        let logits = affine(&top, p, layout.actor);
        let values = affine(&top, p, layout.critic).index_axis_move(Axis(1), 0);
        Ok(ForwardCache { steps, batch, x: x.to_owned(), masks: masks.to_vec(), e, layers, logits, values })
    }

    fn gru_forward(
        &self,
        g: Gru,
        input: &ArrayView2<'_, S>,
        masks: &[S],
        h0: &Array2<S>,
        steps: usize,
        batch: usize,
    ) -> GruCache<S> {
        let p = &self.params[..];
        let hd = g.hid;
        let n = steps * batch;
        let gi = affine(input, p, Dense { w: g.w_ih, b: g.b_ih, out: 3 * hd, inp: g.inp });
        let w_hh = mat(p, g.w_hh, 3 * hd, hd);
        let b_hh = &p[g.b_hh..g.b_hh + 3 * hd];
        let mut c = GruCache {
            h_prev: Array2::zeros((n, hd)),
            r: Array2::zeros((n, hd)),
            z: Array2::zeros((n, hd)),
            n: Array2::zeros((n, hd)),
            ghn: Array2::zeros((n, hd)),
            out: Array2::zeros((n, hd)),
        };
        let mut gh = Array2::<S>::zeros((batch, 3 * hd));
        for t in 0..steps {
            let rows = t * batch..(t + 1) * batch;
            for b in 0..batch {
                let i = t * batch + b;
                let m = masks[i];
                for j in 0..hd {
                    let prev = if t == 0 { h0[[b, j]] } else { c.out[[i - batch, j]] };
                    c.h_prev[[i, j]] = prev * m;
                }
            }
            for b in 0..batch {
                gh.row_mut(b).as_slice_mut().expect("contiguous").copy_from_slice(b_hh);
            }
            general_mat_mul(S::one(), &c.h_prev.slice(s![rows.clone(), ..]), &w_hh.t(), S::one(), &mut gh);
            for b in 0..batch {
                let i = t * batch + b;
                let gi_row = gi.row(i);
                let gh_row = gh.row(b);
                for j in 0..hd {
                    let r = sigmoid(gi_row[j] + gh_row[j]);
                    let z = sigmoid(gi_row[hd + j] + gh_row[hd + j]);
                    let ghn = gh_row[2 * hd + j];
                    let nn = (gi_row[2 * hd + j] + r * ghn).tanh();
                    c.r[[i, j]] = r;
                    c.z[[i, j]] = z;
                    c.n[[i, j]] = nn;
                    c.ghn[[i, j]] = ghn;
                    c.out[[i, j]] = (S::one() - z) * nn + z * c.h_prev[[i, j]];
                }
            }
        }
        c
    }

    /// Gradient of a loss with respect to every parameter, given the loss
    /// gradient at the logits and values. Accumulates into `grad`.
    pub fn backward(&self, cache: &ForwardCache<S>, dlogits: ArrayView2<'_, S>, dvalues: &[S], grad: &mut [S]) {
        assert_eq!(grad.len(), self.params.len());
        let p = &self.params[..];
        let layout = self.layout();
        let top = cache.layers.last().expect("at least one layer").out.view();
        let dv = ArrayView2::from_shape((dvalues.len(), 1), dvalues).expect("column");
        affine_grad(&top, &dlogits, grad, layout.actor);
        affine_grad(&top, &dv, grad, layout.critic);
        let mut dout = dlogits.dot(&mat(p, layout.actor.w, layout.actor.out, layout.actor.inp));
        general_mat_mul(S::one(), &dv, &mat(p, layout.critic.w, 1, layout.critic.inp), S::one(), &mut dout);
        for l in (0..layout.gru.len()).rev() {
            let input = if l == 0 { cache.e.view() } else { cache.layers[l - 1].out.view() };
            dout = self.gru_backward(layout.gru[l], &cache.layers[l], &input, &cache.masks, dout, cache.steps, cache.batch, grad);
        }
        let de = &dout * &cache.e.mapv(|v| S::one() - v * v);
        affine_grad(&cache.x.view(), &de.view(), grad, layout.enc);
    }

    #[allow(clippy::too_many_arguments)]
    fn gru_backward(
        &self,
        g: Gru,
        c: &GruCache<S>,
        input: &ArrayView2<'_, S>,
        masks: &[S],
        dout: Array2<S>,
        steps: usize,
        batch: usize,
        grad: &mut [S],
    ) -> Array2<S> {
        let p = &self.params[..];
        let hd = g.hid;
        let n = steps * batch;
        let w_hh = mat(p, g.w_hh, 3 * hd, hd);
        let mut dgi = Array2::<S>::zeros((n, 3 * hd));
        let mut dgh = Array2::<S>::zeros((n, 3 * hd));
        let mut carry = Array2::<S>::zeros((batch, hd));
        for t in (0..steps).rev() {
            let rows = t * batch..(t + 1) * batch;
            let mut direct = Array2::<S>::zeros((batch, hd));
            for b in 0..batch {
                let i = t * batch + b;
                for j in 0..hd {
                    let dh = dout[[i, j]] + carry[[b, j]];
                    let (r, z, nn, ghn, hp) = (c.r[[i, j]], c.z[[i, j]], c.n[[i, j]], c.ghn[[i, j]], c.h_prev[[i, j]]);
                    let dn_pre = dh * (S::one() - z) * (S::one() - nn * nn);
                    let dz_pre = dh * (hp - nn) * z * (S::one() - z);
                    let dr_pre = dn_pre * ghn * r * (S::one() - r);
                    dgi[[i, j]] = dr_pre;
                    dgi[[i, hd + j]] = dz_pre;
                    dgi[[i, 2 * hd + j]] = dn_pre;
                    dgh[[i, j]] = dr_pre;
                    dgh[[i, hd + j]] = dz_pre;
                    dgh[[i, 2 * hd + j]] = dn_pre * r;
                    direct[[b, j]] = dh * z;
                }
            }
            general_mat_mul(S::one(), &dgh.slice(s![rows, ..]), &w_hh, S::one(), &mut direct);
            for b in 0..batch {
                let m = masks[t * batch + b];
                for j in 0..hd {
                    carry[[b, j]] = direct[[b, j]] * m;
                }
            }
        }
        affine_grad(input, &dgi.view(), grad, Dense { w: g.w_ih, b: g.b_ih, out: 3 * hd, inp: g.inp });
        affine_grad(&c.h_prev.view(), &dgh.view(), grad, Dense { w: g.w_hh, b: g.b_hh, out: 3 * hd, inp: hd });
        dgi.dot(&mat(p, g.w_ih, 3 * hd, g.inp))
    }

    /// One step for a single input: action distribution, value and the new
    /// hidden state.
    pub fn policy_step(&self, feats: &[S], hidden: &[Array2<S>]) -> Result<(Vec<S>, S, Vec<Array2<S>>), NetError> {
        let x = ArrayView2::from_shape((1, feats.len()), feats).map_err(|e| NetError::ShapeMismatch(e.to_string()))?;
        let c = self.forward(x, &[S::one()], hidden, 1, 1)?;
        if !c.is_finite() {
            return Err(NetError::NonFiniteActivation);
        }
        let probs = softmax(c.logits.row(0).as_slice().expect("contiguous"));
        Ok((probs, c.values[0], c.final_hidden()))
    }
}

/// Numerically stable softmax.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let m = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let e: Vec<S> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: S = e.iter().copied().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `log softmax`.
pub fn log_softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let m = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<S>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Shannon entropy in nats.
pub fn entropy<S: Scalar>(probs: &[S]) -> S {
    -probs.iter().filter(|&&p| p > S::zero()).map(|&p| p * p.ln()).sum::<S>()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<S: Scalar, R: Rng>(probs: &[S], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
