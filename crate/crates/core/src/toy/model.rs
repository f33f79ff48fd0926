//! A small attention model with a next-token head and a write-confidence
//! head, differentiated by hand.
//!
//! Per decoding step, with `p` the previous target token and
//! `s_0 .. s_L` the read source tokens (`s_0` a start marker):
//!
//! ```text
//! e_j   = A[p, s_j]                      attention scores over read tokens
//! z_j   = sum_k P_k[s_{j+k}]             k = 1..=LOOKAHEAD window after j
//! h     = tanh(sum_j softmax(e)_j z_j + Q[p] + b)
//! probs = softmax(U h + u)
//! c     = sigmoid(w . h + b_c)
//! ```
//!
//! Positions past the read prefix show a "not yet read" marker, or an
//! end-of-source marker once the source is complete, so the window tells
//! the model whether the word it needs next has arrived.

use rand::Rng;

use crate::losses::{sigmoid, ScoreGrad, TokenScores};

use super::vocab::{Vocabs, BOS_SRC, EOS_SRC, NOT_YET, PAD};

pub const LOOKAHEAD: usize = 3;

/// Keeps `log(1 - c)` finite when the confidence logit saturates.
const CONF_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    vs: usize,
    vt: usize,
    h: usize,
    a: usize,
    p: usize,
    q: usize,
    b: usize,
    u: usize,
    ub: usize,
    w: usize,
    bc: usize,
    total: usize,
}

impl Layout {
    fn new(vs: usize, vt: usize, h: usize) -> Self {
        let a = 0;
        let p = a + vt * vs;
        let q = p + LOOKAHEAD * vs * h;
        let b = q + vt * h;
        let u = b + h;
        let ub = u + vt * h;
        let w = ub + vt;
        let bc = w + h;
        Self {
            vs,
            vt,
            h,
            a,
            p,
            q,
            b,
            u,
            ub,
            w,
            bc,
            total: bc + 1,
        }
    }

    fn p_row(&self, k: usize, tok: usize) -> usize {
        self.p + (k * self.vs + tok) * self.h
    }
}

/// Parameters plus vocabularies of one toy agent. All weights live in a
/// single flat vector so optimizers and checkpoints treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub vocabs: Vocabs,
    hidden: usize,
    params: Vec<f64>,
    layout: Layout,
}

/// Encoded source view: `[start, s_1 .. s_L, markers...]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceContext {
    seq: Vec<usize>,
    read: usize,
}

/// Activations of one decoding step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    prev: usize,
    attn: Vec<f64>,
    z: Vec<f64>,
    h: Vec<f64>,
    pub probs: Vec<f64>,
    pub confidence: f64,
}

/// Scores of a whole target under teacher forcing; positions `1..=n+1`,
/// the last one scoring the end-of-sequence token.
#[derive(Debug, Clone)]
pub struct SequencePass {
    pub logp: Vec<f64>,
    pub confidence: Vec<f64>,
    caches: Vec<StepCache>,
    tokens: Vec<usize>,
}

impl SequencePass {
    pub fn token_scores(&self, logp_ref: Vec<f64>) -> crate::Result<TokenScores> {
        TokenScores::new(self.logp.clone(), logp_ref, self.confidence.clone())
    }
}

impl ToyModel {
    pub fn new(vocabs: Vocabs, hidden: usize, rng: &mut impl Rng, init_scale: f64) -> Self {
        let layout = Layout::new(vocabs.source.len(), vocabs.target.len(), hidden);
        let params = (0..layout.total)
            .map(|_| rng.gen_range(-init_scale..init_scale))
            .collect();
        Self {
            vocabs,
            hidden,
            params,
            layout,
        }
    }

    pub fn from_params(vocabs: Vocabs, hidden: usize, params: Vec<f64>) -> crate::Result<Self> {
        let layout = Layout::new(vocabs.source.len(), vocabs.target.len(), hidden);
        if params.len() != layout.total {
            return Err(crate::Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(crate::Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self {
            vocabs,
            hidden,
            params,
            layout,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn context(&self, source_ids: &[usize], complete: bool) -> SourceContext {
        let v = &self.vocabs;
        let mut seq = Vec::with_capacity(source_ids.len() + 1 + LOOKAHEAD);
        seq.push(v.src_special(BOS_SRC));
        seq.extend_from_slice(source_ids);
        for i in 0..LOOKAHEAD {
            seq.push(match (complete, i) {
                (false, _) => v.src_special(NOT_YET),
                (true, 0) => v.src_special(EOS_SRC),
                (true, _) => v.src_special(PAD),
            });
        }
        SourceContext {
            seq,
            read: source_ids.len(),
        }
    }

    pub fn step(&self, ctx: &SourceContext, prev: usize) -> StepCache {
        let l = &self.layout;
        let th = &self.params;
        let h_dim = l.h;
        let span = ctx.read + 1;

        let a_row = l.a + prev * l.vs;
        let mut attn: Vec<f64> = ctx.seq[..span].iter().map(|&s| th[a_row + s]).collect();
        softmax_in_place(&mut attn);

        let mut z = vec![0.0; span * h_dim];
        for j in 0..span {
            let zj = &mut z[j * h_dim..(j + 1) * h_dim];
            for k in 0..LOOKAHEAD {
                let row = l.p_row(k, ctx.seq[j + k + 1]);
                for (zi, pi) in zj.iter_mut().zip(&th[row..row + h_dim]) {
                    *zi += pi;
                }
            }
        }

        let mut h = vec![0.0; h_dim];
        let q_row = l.q + prev * h_dim;
        for i in 0..h_dim {
            let mut acc = th[q_row + i] + th[l.b + i];
            for j in 0..span {
                acc += attn[j] * z[j * h_dim + i];
            }
            h[i] = acc.tanh();
        }

        let mut probs: Vec<f64> = (0..l.vt)
            .map(|v| {
                let row = l.u + v * h_dim;
                th[l.ub + v] + dot(&th[row..row + h_dim], &h)
            })
            .collect();
        softmax_in_place(&mut probs);

        let conf_logit = th[l.bc] + dot(&th[l.w..l.w + h_dim], &h);
        StepCache {
            prev,
            attn,
            z,
            h,
            probs,
            confidence: sigmoid(conf_logit),
        }
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// derivatives are `g_logp` w.r.t. `log probs[token]` and `g_conf`
    /// w.r.t. the confidence of this step.
    pub fn backward_step(
        &self,
        ctx: &SourceContext,
        cache: &StepCache,
        token: usize,
        g_logp: f64,
        g_conf: f64,
        grad: &mut [f64],
    ) {
        let l = &self.layout;
        let th = &self.params;
        let h_dim = l.h;
        let span = ctx.read + 1;
        let mut dh = vec![0.0; h_dim];

        if g_logp != 0.0 {
            for v in 0..l.vt {
                let indicator = if v == token { 1.0 } else { 0.0 };
                let dlogit = g_logp * (indicator - cache.probs[v]);
                let row = l.u + v * h_dim;
                grad[l.ub + v] += dlogit;
                for i in 0..h_dim {
                    grad[row + i] += dlogit * cache.h[i];
                    dh[i] += dlogit * th[row + i];
                }
            }
        }

        if g_conf != 0.0 {
            let c = cache.confidence;
            let dlogit = g_conf * c * (1.0 - c);
            grad[l.bc] += dlogit;
            for i in 0..h_dim {
                grad[l.w + i] += dlogit * cache.h[i];
                dh[i] += dlogit * th[l.w + i];
            }
        }

        let da: Vec<f64> = dh
            .iter()
            .zip(&cache.h)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect();
        let q_row = l.q + cache.prev * h_dim;
        for i in 0..h_dim {
            grad[l.b + i] += da[i];
            grad[q_row + i] += da[i];
        }

        let mut dattn = vec![0.0; span];
        for (j, dj) in dattn.iter_mut().enumerate() {
            let zj = &cache.z[j * h_dim..(j + 1) * h_dim];
            *dj = dot(zj, &da);
            let aj = cache.attn[j];
            for k in 0..LOOKAHEAD {
                let row = l.p_row(k, ctx.seq[j + k + 1]);
                for i in 0..h_dim {
                    grad[row + i] += aj * da[i];
                }
            }
        }
        let mean: f64 = cache.attn.iter().zip(&dattn).map(|(a, d)| a * d).sum();
        let a_row = l.a + cache.prev * l.vs;
        for j in 0..span {
            grad[a_row + ctx.seq[j]] += cache.attn[j] * (dattn[j] - mean);
        }
    }

    /// Teacher-forced pass over `target`, plus the end-of-sequence position.
    pub fn score(&self, ctx: &SourceContext, target: &[usize]) -> SequencePass {
        let bos = self.vocabs.bos();
        let eos = self.vocabs.eos();
        let mut tokens = Vec::with_capacity(target.len() + 1);
        let mut caches = Vec::with_capacity(target.len() + 1);
        let mut logp = Vec::with_capacity(target.len() + 1);
        let mut confidence = Vec::with_capacity(target.len() + 1);
        for t in 0..=target.len() {
            let prev = if t == 0 { bos } else { target[t - 1] };
            let tok = target.get(t).copied().unwrap_or(eos);
            let cache = self.step(ctx, prev);
            logp.push(cache.probs[tok].max(f64::MIN_POSITIVE).ln());
            confidence.push(cache.confidence.clamp(CONF_EPS, 1.0 - CONF_EPS));
            tokens.push(tok);
            caches.push(cache);
        }
        SequencePass {
            logp,
            confidence,
            caches,
            tokens,
        }
    }

    /// Log-probabilities only, for a frozen reference.
    pub fn score_logp(&self, ctx: &SourceContext, target: &[usize]) -> Vec<f64> {
        self.score(ctx, target).logp
    }

    pub fn backward(&self, ctx: &SourceContext, pass: &SequencePass, g: &ScoreGrad, grad: &mut [f64]) {
        for (t, cache) in pass.caches.iter().enumerate() {
            self.backward_step(ctx, cache, pass.tokens[t], g.logp_policy[t], g.confidence[t], grad);
        }
    }

    /// Most probable next token, never the start token.
    pub fn greedy(&self, cache: &StepCache) -> usize {
        let bos = self.vocabs.bos();
        let mut best = usize::MAX;
        for (v, p) in cache.probs.iter().enumerate() {
            if v != bos && (best == usize::MAX || *p > cache.probs[best]) {
                best = v;
            }
        }
        best
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_in_place(x: &mut [f64]) {
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - top).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}
