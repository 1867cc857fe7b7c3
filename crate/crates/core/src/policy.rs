//! Risk-seeking policy: a GRU sequence encoder with an MLP head, a running
//! quantile tracker and the quantile policy-gradient update.
//!
//! The network reads the token prefix (BEG first) as vocabulary indices and
//! scores every vocabulary entry; illegal entries are masked out of the
//! softmax. Vocabularies put BEG and END last, so BEG is `vocab_size - 2`.
//!
//! Parameters live in one flat vector `theta`, laid out as: embedding
//! (`vocab x embed`), then per GRU layer `w_ih (3H x in)`, `w_hh (3H x H)`,
//! `b_ih (3H)`, `b_hh (3H)` with gate blocks ordered reset, update, new; then
//! the head `w1, b1, w2, b2, w3, b3`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::env::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyError {
    NonFiniteGradient,
    /// Parameter vector length does not match the architecture.
    Shape { expected: usize, found: usize },
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::NonFiniteGradient => f.write_str("gradient estimate has non-finite entries"),
            PolicyError::Shape { expected, found } => {
                write!(f, "expected {expected} parameters, found {found}")
            }
        }
    }
}

impl core::error::Error for PolicyError {}

/// Action distributions over a vocabulary, queried incrementally along a
/// token prefix.
pub trait ActionPolicy {
    type Cursor: Clone;

    /// Encoder state before any token.
    fn start(&self) -> Self::Cursor;

    fn advance(&self, cursor: &mut Self::Cursor, token: usize);

    /// Distribution over the whole vocabulary, zero outside `mask`.
    fn distribution(&self, cursor: &Self::Cursor, mask: &[usize]) -> Vec<f64>;

    /// Distribution after reading `prefix` (BEG included).
    fn probabilities(&self, prefix: &[usize], mask: &[usize]) -> Vec<f64> {
        let mut c = self.start();
        for &t in prefix {
            self.advance(&mut c, t);
        }
        self.distribution(&c, mask)
    }
}

/// Uniform over the legal actions.
#[derive(Clone, Copy, Debug)]
pub struct UniformPolicy {
    pub vocab_size: usize,
}

impl ActionPolicy for UniformPolicy {
    type Cursor = ();

    fn start(&self) {}

    fn advance(&self, _: &mut (), _: usize) {}

    fn distribution(&self, _: &(), mask: &[usize]) -> Vec<f64> {
        let mut p = vec![0.0; self.vocab_size];
        for &i in mask {
            p[i] = 1.0 / mask.len() as f64;
        }
        p
    }
}

/// Softmax of `logits` restricted to `mask`; exactly zero elsewhere.
pub fn masked_softmax(logits: &[f64], mask: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; logits.len()];
    let max = mask
        .iter()
        .map(|&i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &i in mask {
        let e = libm::exp(logits[i] - max);
        p[i] = e;
        sum += e;
    }
    for &i in mask {
        p[i] /= sum;
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyConfig {
    /// Vocabulary size including BEG and END.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Width of each of the head's two hidden layers.
    pub head_hidden: usize,
}

impl PolicyConfig {
    pub fn new(vocab_size: usize) -> PolicyConfig {
        PolicyConfig {
            vocab_size,
            embed_dim: 32,
            hidden: 64,
            layers: 4,
            head_hidden: 32,
        }
    }

    pub fn beg_index(&self) -> usize {
        self.vocab_size - 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct GruOffsets {
    input: usize,
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    emb: usize,
    gru: Vec<GruOffsets>,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

impl Layout {
    fn new(c: &PolicyConfig) -> Layout {
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let emb = take(c.vocab_size * c.embed_dim);
        let h3 = 3 * c.hidden;
        let gru = (0..c.layers)
            .map(|l| {
                let input = if l == 0 { c.embed_dim } else { c.hidden };
                GruOffsets {
                    input,
                    w_ih: take(h3 * input),
                    w_hh: take(h3 * c.hidden),
                    b_ih: take(h3),
                    b_hh: take(h3),
                }
            })
            .collect();
        let hh = c.head_hidden;
        let w1 = take(hh * c.hidden);
        let b1 = take(hh);
        let w2 = take(hh * hh);
        let b2 = take(hh);
        let w3 = take(c.vocab_size * hh);
        let b3 = take(c.vocab_size);
        Layout {
            emb,
            gru,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            total: at,
        }
    }

    /// (offset, length, fan-in) of every parameter block, in layout order.
    fn blocks(&self, c: &PolicyConfig) -> Vec<(usize, usize, usize)> {
        let h3 = 3 * c.hidden;
        let hh = c.head_hidden;
        let mut out = vec![(self.emb, c.vocab_size * c.embed_dim, 1)];
        for g in &self.gru {
            out.push((g.w_ih, h3 * g.input, c.hidden));
            out.push((g.w_hh, h3 * c.hidden, c.hidden));
            out.push((g.b_ih, h3, c.hidden));
            out.push((g.b_hh, h3, c.hidden));
        }
        out.push((self.w1, hh * c.hidden, c.hidden));
        out.push((self.b1, hh, c.hidden));
        out.push((self.w2, hh * hh, hh));
        out.push((self.b2, hh, hh));
        out.push((self.w3, c.vocab_size * hh, hh));
        out.push((self.b3, c.vocab_size, hh));
        out
    }
}

/// Which part of the network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamClass {
    Embedding,
    Recurrent,
    Head,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// `out = w * x + b` for a row-major `w` of shape `out.len() x x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        let row = &w[k * n..(k + 1) * n];
        *o = b[k] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

/// Accumulates `dw += dy x^T`, `db += dy` and `dx += w^T dy`.
fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: Option<&mut [f64]>,
    dx: Option<&mut [f64]>,
) {
    let n = x.len();
    for (k, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let drow = &mut dw[k * n..(k + 1) * n];
        for (d, v) in drow.iter_mut().zip(x) {
            *d += g * v;
        }
    }
    if let Some(db) = db {
        for (d, g) in db.iter_mut().zip(dy) {
            *d += g;
        }
    }
    if let Some(dx) = dx {
        for (k, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &w[k * n..(k + 1) * n];
            for (d, a) in dx.iter_mut().zip(row) {
                *d += g * a;
            }
        }
    }
}

/// Intermediate values of one GRU cell application.
#[derive(Clone, Debug)]
struct CellTape {
    x: Vec<f64>,
    h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `w_hn h + b_hn`.
    hn: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Clone, Debug)]
struct HeadTape {
    input: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

/// Per-layer hidden states of a [`Policy`] after reading a prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCursor {
    hidden: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    config: PolicyConfig,
    layout: Layout,
    theta: Vec<f64>,
}

impl Policy {
    /// Parameters drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Policy {
        let layout = Layout::new(&config);
        let mut theta = vec![0.0; layout.total];
        for (off, len, fan_in) in layout.blocks(&config) {
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            for v in &mut theta[off..off + len] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Policy {
            config,
            layout,
            theta,
        }
    }

    pub fn zeros(config: PolicyConfig) -> Policy {
        let layout = Layout::new(&config);
        Policy {
            config,
            theta: vec![0.0; layout.total],
            layout,
        }
    }

    pub fn from_parameters(config: PolicyConfig, theta: Vec<f64>) -> Result<Policy, PolicyError> {
        let layout = Layout::new(&config);
        if theta.len() != layout.total {
            return Err(PolicyError::Shape {
                expected: layout.total,
                found: theta.len(),
            });
        }
        Ok(Policy {
            config,
            layout,
            theta,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[f64] {
        &self.theta
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn num_parameters(&self) -> usize {
        self.layout.total
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Class of parameter `index`.
    pub fn param_class(&self, index: usize) -> ParamClass {
        let l = self.layout();
        if index < l.gru.first().map_or(l.w1, |g| g.w_ih) {
            ParamClass::Embedding
        } else if index < l.w1 {
            ParamClass::Recurrent
        } else {
            ParamClass::Head
        }
    }

    fn embedding(&self, l: &Layout, token: usize) -> &[f64] {
        let e = self.config.embed_dim;
        &self.theta[l.emb + token * e..l.emb + (token + 1) * e]
    }

    fn cell(&self, g: &GruOffsets, x: &[f64], h: &[f64]) -> CellTape {
        let hd = self.config.hidden;
        let h3 = 3 * hd;
        let th = &self.theta;
        let mut gi = vec![0.0; h3];
        let mut gh = vec![0.0; h3];
        affine(&th[g.w_ih..g.w_ih + h3 * g.input], &th[g.b_ih..g.b_ih + h3], x, &mut gi);
        affine(&th[g.w_hh..g.w_hh + h3 * hd], &th[g.b_hh..g.b_hh + h3], h, &mut gh);
        let mut r = vec![0.0; hd];
        let mut z = vec![0.0; hd];
        let mut n = vec![0.0; hd];
        let mut out = vec![0.0; hd];
        for k in 0..hd {
            r[k] = sigmoid(gi[k] + gh[k]);
            z[k] = sigmoid(gi[hd + k] + gh[hd + k]);
            n[k] = libm::tanh(gi[2 * hd + k] + r[k] * gh[2 * hd + k]);
            out[k] = (1.0 - z[k]) * n[k] + z[k] * h[k];
        }
        CellTape {
            x: x.to_vec(),
            h: h.to_vec(),
            r,
            z,
            n,
            hn: gh[2 * hd..].to_vec(),
            out,
        }
    }

    fn head(&self, l: &Layout, top: &[f64]) -> (Vec<f64>, HeadTape) {
        let (hh, v) = (self.config.head_hidden, self.config.vocab_size);
        let th = &self.theta;
        let mut a1 = vec![0.0; hh];
        affine(&th[l.w1..l.b1], &th[l.b1..l.b1 + hh], top, &mut a1);
        a1.iter_mut().for_each(|x| *x = libm::tanh(*x));
        let mut a2 = vec![0.0; hh];
        affine(&th[l.w2..l.b2], &th[l.b2..l.b2 + hh], &a1, &mut a2);
        a2.iter_mut().for_each(|x| *x = libm::tanh(*x));
        let mut logits = vec![0.0; v];
        affine(&th[l.w3..l.b3], &th[l.b3..l.b3 + v], &a2, &mut logits);
        (
            logits,
            HeadTape {
                input: top.to_vec(),
                a1,
                a2,
            },
        )
    }

    /// Unmasked scores after reading `prefix`.
    pub fn logits(&self, prefix: &[usize]) -> Vec<f64> {
        let mut c = self.start();
        for &t in prefix {
            self.advance(&mut c, t);
        }
        self.head(self.layout(), c.hidden.last().expect("at least one layer")).0
    }

    /// `sum_t log pi(a_t | prefix_t)` over `steps` of (action, legal mask),
    /// where prefix_t is BEG followed by the earlier actions.
    pub fn log_prob_steps(&self, steps: &[(usize, &[usize])]) -> f64 {
        let mut c = self.start();
        self.advance(&mut c, self.config.beg_index());
        let mut total = 0.0;
        for &(a, mask) in steps {
            let p = self.distribution(&c, mask);
            total += libm::log(p[a]);
            self.advance(&mut c, a);
        }
        total
    }

    /// Gradient of [`Policy::log_prob_steps`] by backpropagation through
    /// time. The mask is a constant: illegal logits get no gradient.
    pub fn log_prob_gradient_steps(&self, steps: &[(usize, &[usize])]) -> Vec<f64> {
        let cfg = self.config;
        let l = self.layout();
        let mut grad = vec![0.0; self.layout.total];
        let t_len = steps.len();
        if t_len == 0 {
            return grad;
        }
        let hd = cfg.hidden;
        let h3 = 3 * hd;
        let nl = cfg.layers;

        // Forward: input at time t is BEG, then the previous action.
        let inputs: Vec<usize> = core::iter::once(cfg.beg_index())
            .chain(steps[..t_len - 1].iter().map(|s| s.0))
            .collect();
        let mut tapes: Vec<Vec<CellTape>> = Vec::with_capacity(t_len);
        let mut heads = Vec::with_capacity(t_len);
        let mut dlogits = Vec::with_capacity(t_len);
        let mut h: Vec<Vec<f64>> = vec![vec![0.0; hd]; nl];
        for (t, &tok) in inputs.iter().enumerate() {
            let mut x = self.embedding(l, tok).to_vec();
            let mut layer_tapes = Vec::with_capacity(nl);
            for (li, g) in l.gru.iter().enumerate() {
                let tape = self.cell(g, &x, &h[li]);
                h[li] = tape.out.clone();
                x = tape.out.clone();
                layer_tapes.push(tape);
            }
            tapes.push(layer_tapes);
            let (logits, head) = self.head(l, &x);
            let (a, mask) = steps[t];
            let p = masked_softmax(&logits, mask);
            let mut d = vec![0.0; cfg.vocab_size];
            for &i in mask {
                d[i] = -p[i];
            }
            d[a] += 1.0;
            heads.push(head);
            dlogits.push(d);
        }

        // Backward through time.
        let mut dh_next: Vec<Vec<f64>> = vec![vec![0.0; hd]; nl];
        for t in (0..t_len).rev() {
            let head = &heads[t];
            let hh = cfg.head_hidden;
            let mut da2 = vec![0.0; hh];
            {
                let (gw, rest) = grad.split_at_mut(l.b3);
                affine_backward(
                    &self.theta[l.w3..l.b3],
                    &head.a2,
                    &dlogits[t],
                    &mut gw[l.w3..l.b3],
                    Some(&mut rest[..cfg.vocab_size]),
                    Some(&mut da2),
                );
            }
            for (d, a) in da2.iter_mut().zip(&head.a2) {
                *d *= 1.0 - a * a;
            }
            let mut da1 = vec![0.0; hh];
            {
                let (gw, rest) = grad.split_at_mut(l.b2);
                affine_backward(
                    &self.theta[l.w2..l.b2],
                    &head.a1,
                    &da2,
                    &mut gw[l.w2..l.b2],
                    Some(&mut rest[..hh]),
                    Some(&mut da1),
                );
            }
            for (d, a) in da1.iter_mut().zip(&head.a1) {
                *d *= 1.0 - a * a;
            }
            let mut dtop = vec![0.0; hd];
            {
                let (gw, rest) = grad.split_at_mut(l.b1);
                affine_backward(
                    &self.theta[l.w1..l.b1],
                    &head.input,
                    &da1,
                    &mut gw[l.w1..l.b1],
                    Some(&mut rest[..hh]),
                    Some(&mut dtop),
                );
            }

            let mut dfrom_above = dtop;
            for li in (0..nl).rev() {
                let g = l.gru[li];
                let tape = &tapes[t][li];
                let dout: Vec<f64> = dfrom_above
                    .iter()
                    .zip(&dh_next[li])
                    .map(|(a, b)| a + b)
                    .collect();
                let mut dgi = vec![0.0; h3];
                let mut dgh = vec![0.0; h3];
                let mut dh = vec![0.0; hd];
                for k in 0..hd {
                    let (r, z, n) = (tape.r[k], tape.z[k], tape.n[k]);
                    let dn = dout[k] * (1.0 - z);
                    let dz = dout[k] * (tape.h[k] - n);
                    dh[k] += dout[k] * z;
                    let dan = dn * (1.0 - n * n);
                    let dr = dan * tape.hn[k];
                    let daz = dz * z * (1.0 - z);
                    let dar = dr * r * (1.0 - r);
                    dgi[k] = dar;
                    dgh[k] = dar;
                    dgi[hd + k] = daz;
                    dgh[hd + k] = daz;
                    dgi[2 * hd + k] = dan;
                    dgh[2 * hd + k] = dan * r;
                }
                let mut dx = vec![0.0; g.input];
                {
                    let (gw, rest) = grad.split_at_mut(g.b_ih);
                    affine_backward(
                        &self.theta[g.w_ih..g.w_hh],
                        &tape.x,
                        &dgi,
                        &mut gw[g.w_ih..g.w_hh],
                        Some(&mut rest[..h3]),
                        Some(&mut dx),
                    );
                }
                {
                    let (gw, rest) = grad.split_at_mut(g.b_hh);
                    affine_backward(
                        &self.theta[g.w_hh..g.b_ih],
                        &tape.h,
                        &dgh,
                        &mut gw[g.w_hh..g.b_ih],
                        Some(&mut rest[..h3]),
                        Some(&mut dh),
                    );
                }
                dh_next[li] = dh;
                dfrom_above = dx;
            }
            let e = cfg.embed_dim;
            let off = l.emb + inputs[t] * e;
            for (d, v) in grad[off..off + e].iter_mut().zip(&dfrom_above) {
                *d += v;
            }
        }
        grad
    }

    /// `sum_t grad log pi(a_t | s_{t-1})` over a trajectory.
    pub fn log_prob_gradient(&self, trajectory: &Trajectory) -> Vec<f64> {
        let steps: Vec<(usize, &[usize])> = trajectory
            .transitions
            .iter()
            .map(|t| (t.action_index, t.legal.as_slice()))
            .collect();
        self.log_prob_gradient_steps(&steps)
    }

    pub fn log_prob(&self, trajectory: &Trajectory) -> f64 {
        let steps: Vec<(usize, &[usize])> = trajectory
            .transitions
            .iter()
            .map(|t| (t.action_index, t.legal.as_slice()))
            .collect();
        self.log_prob_steps(&steps)
    }

    /// `-1{R <= q} * grad log pi(trajectory)`.
    pub fn risk_gradient(&self, trajectory: &Trajectory, q: f64) -> GradientEstimate {
        if trajectory.cumulative_reward <= q {
            let mut d = self.log_prob_gradient(trajectory);
            d.iter_mut().for_each(|v| *v = -*v);
            GradientEstimate { d, below: true }
        } else {
            GradientEstimate {
                d: vec![0.0; self.layout.total],
                below: false,
            }
        }
    }

    /// `theta += lr * D`.
    pub fn apply_update(&mut self, estimate: &GradientEstimate, lr: f64) -> Result<(), PolicyError> {
        if estimate.d.len() != self.layout.total {
            return Err(PolicyError::Shape {
                expected: self.layout.total,
                found: estimate.d.len(),
            });
        }
        if estimate.d.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteGradient);
        }
        for (t, d) in self.theta.iter_mut().zip(&estimate.d) {
            *t += lr * d;
        }
        Ok(())
    }
}

impl ActionPolicy for Policy {
    type Cursor = GruCursor;

    fn start(&self) -> GruCursor {
        GruCursor {
            hidden: vec![vec![0.0; self.config.hidden]; self.config.layers],
        }
    }

    fn advance(&self, cursor: &mut GruCursor, token: usize) {
        let l = self.layout();
        let mut x = self.embedding(l, token).to_vec();
        for (li, g) in l.gru.iter().enumerate() {
            let out = self.cell(g, &x, &cursor.hidden[li]).out;
            cursor.hidden[li].copy_from_slice(&out);
            x = out;
        }
    }

    fn distribution(&self, cursor: &GruCursor, mask: &[usize]) -> Vec<f64> {
        let top = cursor.hidden.last().expect("at least one layer");
        let logits = self.head(self.layout(), top).0;
        masked_softmax(&logits, mask)
    }
}

/// A policy-gradient direction and whether its trajectory was at or below
/// the tracked quantile.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub d: Vec<f64>,
    pub below: bool,
}

impl GradientEstimate {
    pub fn zeros(len: usize) -> GradientEstimate {
        GradientEstimate {
            d: vec![0.0; len],
            below: false,
        }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.d.iter().map(|v| v * v).sum())
    }
}

/// Stochastic-approximation tracker of the `level` quantile of returns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileTracker {
    pub q: f64,
    pub level: f64,
    pub beta: f64,
}

impl QuantileTracker {
    pub fn new(level: f64, beta: f64) -> QuantileTracker {
        QuantileTracker { q: 0.0, level, beta }
    }

    /// `q += beta * (level - 1{r <= q})`; returns the indicator.
    pub fn update(&mut self, r: f64) -> bool {
        let below = r <= self.q;
        self.q += self.beta * (self.level - if below { 1.0 } else { 0.0 });
        below
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// One ascent step per trajectory.
    #[default]
    PerTrajectory,
    /// One step with the estimates averaged over the buffer.
    Batched,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub final_q: f64,
    /// Share of trajectories at or below the tracked quantile.
    pub fraction_below: f64,
    pub grad_norms: Vec<f64>,
}

/// One pass over `buffer`: for each trajectory, update the tracker with its
/// return, then step along the risk-seeking gradient at the new quantile.
pub fn train_epoch(
    policy: &mut Policy,
    buffer: &[Trajectory],
    tracker: &mut QuantileTracker,
    lr: f64,
    mode: UpdateMode,
) -> Result<EpochStats, PolicyError> {
    let mut below = 0usize;
    let mut norms = Vec::with_capacity(buffer.len());
    let mut acc = GradientEstimate::zeros(policy.num_parameters());
    for traj in buffer {
        tracker.update(traj.cumulative_reward);
        let est = policy.risk_gradient(traj, tracker.q);
        if est.below {
            below += 1;
        }
        norms.push(est.norm());
        match mode {
            UpdateMode::PerTrajectory => {
                if est.below {
                    policy.apply_update(&est, lr)?;
                }
            }
            UpdateMode::Batched => {
                for (a, d) in acc.d.iter_mut().zip(&est.d) {
                    *a += d;
                }
            }
        }
    }
    if mode == UpdateMode::Batched && !buffer.is_empty() {
        let n = buffer.len() as f64;
        acc.d.iter_mut().for_each(|v| *v /= n);
        policy.apply_update(&acc, lr)?;
    }
    Ok(EpochStats {
        final_q: tracker.q,
        fraction_below: if buffer.is_empty() {
            0.0
        } else {
            below as f64 / buffer.len() as f64
        },
        grad_norms: norms,
    })
}
