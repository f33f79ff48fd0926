//! Latency-aware preference losses with analytic input gradients.
//!
//! Every loss consumes per-position [`TokenScores`] (policy and reference
//! log-probabilities plus write confidences) and returns its value together
//! with gradients with respect to the policy log-probabilities and
//! confidences. Position `n + 1` of a length-`n` target is the stop
//! position: its log-probabilities are those of the end-of-sequence token.
//!
//! The preference losses share the confidence-weighted token reward
//!
//! ```text
//! r_t = c_t * (beta * log(pi(y_t) / pi_ref(y_t)) - alpha)
//! ```
//!
//! whose sum over `t = 1..=n+1` replaces the sequence-level implicit reward
//! inside a Bradley-Terry comparison. On the rejected side `c_t` is fixed
//! to `1` for `t <= n` and `0` at the stop position, and no gradient flows
//! into it.

mod optimal;

pub use optimal::{optimal_policy_oracle, OptimalPolicy, MAX_ORACLE_LEN, MAX_ORACLE_VOCAB};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-position scores for one target sequence of length `n`; all arrays
/// have length `n + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    pub logp_policy: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl TokenScores {
    pub fn new(logp_policy: Vec<f64>, logp_ref: Vec<f64>, confidence: Vec<f64>) -> Result<Self> {
        let s = Self {
            logp_policy,
            logp_ref,
            confidence,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks shapes and log-probability ranges; confidences must be in
    /// `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let n = self.logp_policy.len();
        if n == 0 {
            return Err(Error::Validation("token scores need at least the stop position".into()));
        }
        if self.logp_ref.len() != n || self.confidence.len() != n {
            return Err(Error::Validation(format!(
                "score arrays differ in length: {}, {}, {}",
                n,
                self.logp_ref.len(),
                self.confidence.len()
            )));
        }
        let bad_logp = |v: &f64| !v.is_finite() || *v > 0.0;
        if self.logp_policy.iter().any(bad_logp) || self.logp_ref.iter().any(bad_logp) {
            return Err(Error::Domain("log-probabilities must be finite and <= 0".into()));
        }
        if self
            .confidence
            .iter()
            .any(|c| !c.is_finite() || !(0.0..=1.0).contains(c))
        {
            return Err(Error::Domain("confidence outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Target length `n` (excluding the stop position).
    pub fn seq_len(&self) -> usize {
        self.logp_policy.len() - 1
    }

    fn require_open_confidence(&self) -> Result<()> {
        if self.confidence.iter().any(|&c| c <= 0.0 || c >= 1.0) {
            return Err(Error::Domain("confidence must lie strictly inside (0, 1)".into()));
        }
        Ok(())
    }
}

/// How the preferred side's stop position enters the reward sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalMode {
    /// `r_{n+1} = c_{n+1} (beta * stop-token log-ratio - alpha)`.
    #[default]
    EosLogRatio,
    /// `r_{n+1} = -alpha * c_{n+1}`.
    PenaltyOnly,
}

impl std::str::FromStr for TerminalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eos-logratio" | "eos_logratio" => Ok(Self::EosLogRatio),
            "penalty-only" | "penalty_only" => Ok(Self::PenaltyOnly),
            other => Err(Error::Config(format!("unknown terminal mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Length/latency weight; acts as a per-token write threshold `alpha / beta`.
    pub alpha: f64,
    pub beta: f64,
    pub lambda_w: f64,
    pub lambda_l: f64,
    pub terminal_mode: TerminalMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            lambda_w: 1.0,
            lambda_l: 1.0,
            terminal_mode: TerminalMode::EosLogRatio,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !self.lambda_w.is_finite() || !self.lambda_l.is_finite() {
            return Err(Error::Config("lambda weights must be finite".into()));
        }
        Ok(())
    }
}

/// Gradient of a loss with respect to one [`TokenScores`] input.
/// Reference log-probabilities are constants and carry no gradient.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreGrad {
    pub logp_policy: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl ScoreGrad {
    fn zeros(n: usize) -> Self {
        Self {
            logp_policy: vec![0.0; n],
            confidence: vec![0.0; n],
        }
    }
}

/// Loss value plus one [`ScoreGrad`] per score input, in argument order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValueWithGrad {
    pub value: f64,
    pub grads: Vec<ScoreGrad>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log(sigmoid(x))`, stable for large `|x|`.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Multi-task supervised loss: token negative log-likelihood over the
/// target plus binary cross-entropy on the write confidences (1 for
/// `t <= n`, 0 at the stop position).
pub fn msft_loss(scores: &TokenScores) -> Result<LossValueWithGrad> {
    scores.validate()?;
    scores.require_open_confidence()?;
    let n = scores.seq_len();
    let mut grad = ScoreGrad::zeros(n + 1);
    let mut value = 0.0;
    for t in 0..n {
        value -= scores.logp_policy[t];
        grad.logp_policy[t] = -1.0;
        let c = scores.confidence[t];
        value -= c.ln();
        grad.confidence[t] = -1.0 / c;
    }
    let c = scores.confidence[n];
    value -= (-c).ln_1p();
    grad.confidence[n] = 1.0 / (1.0 - c);
    Ok(LossValueWithGrad {
        value,
        grads: vec![grad],
    })
}

/// Summed token reward of one side with its partial derivatives.
struct SideReward {
    sum: f64,
    d_logp: Vec<f64>,
    d_conf: Vec<f64>,
}

/// Preferred side: model confidences, stop position per `terminal_mode`.
/// With `use_ref = false` the log-ratio is replaced by the bare policy
/// log-probability.
fn preferred_reward(s: &TokenScores, cfg: &LossConfig, use_ref: bool) -> SideReward {
    let n = s.seq_len();
    let mut out = SideReward {
        sum: 0.0,
        d_logp: vec![0.0; n + 1],
        d_conf: vec![0.0; n + 1],
    };
    for t in 0..=n {
        let c = s.confidence[t];
        let log_term = if use_ref {
            s.logp_policy[t] - s.logp_ref[t]
        } else {
            s.logp_policy[t]
        };
        let scored = t < n || cfg.terminal_mode == TerminalMode::EosLogRatio;
        let per_unit = if scored {
            cfg.beta * log_term - cfg.alpha
        } else {
            -cfg.alpha
        };
        out.sum += c * per_unit;
        out.d_conf[t] = per_unit;
        if scored {
            out.d_logp[t] = cfg.beta * c;
        }
    }
    out
}

/// Rejected side: confidences fixed at the write indicator.
fn rejected_reward(s: &TokenScores, cfg: &LossConfig, use_ref: bool) -> SideReward {
    let n = s.seq_len();
    let mut out = SideReward {
        sum: 0.0,
        d_logp: vec![0.0; n + 1],
        d_conf: vec![0.0; n + 1],
    };
    for t in 0..n {
        let log_term = if use_ref {
            s.logp_policy[t] - s.logp_ref[t]
        } else {
            s.logp_policy[t]
        };
        out.sum += cfg.beta * log_term - cfg.alpha;
        out.d_logp[t] = cfg.beta;
    }
    out
}

fn pairwise(
    w: &TokenScores,
    l: &TokenScores,
    cfg: &LossConfig,
    use_ref: bool,
) -> Result<(f64, ScoreGrad, ScoreGrad)> {
    cfg.validate()?;
    w.validate()?;
    l.validate()?;
    let rw = preferred_reward(w, cfg, use_ref);
    let rl = rejected_reward(l, cfg, use_ref);
    let margin = rw.sum - rl.sum;
    // dL/dmargin for L = -log sigmoid(margin)
    let g = -sigmoid(-margin);
    let gw = ScoreGrad {
        logp_policy: rw.d_logp.iter().map(|d| g * d).collect(),
        confidence: rw.d_conf.iter().map(|d| g * d).collect(),
    };
    let gl = ScoreGrad {
        logp_policy: rl.d_logp.iter().map(|d| -g * d).collect(),
        confidence: vec![0.0; l.seq_len() + 1],
    };
    Ok((neg_log_sigmoid(margin), gw, gl))
}

/// Preference loss with a full-source reference model and a
/// confidence-weighted length term.
pub fn simuldpo_loss(
    w: &TokenScores,
    l: &TokenScores,
    cfg: &LossConfig,
) -> Result<LossValueWithGrad> {
    let (value, gw, gl) = pairwise(w, l, cfg, true)?;
    Ok(LossValueWithGrad {
        value,
        grads: vec![gw, gl],
    })
}

/// Reference-free contrastive variant with a likelihood term on the
/// preferred side.
pub fn simulcpo_loss(
    w: &TokenScores,
    l: &TokenScores,
    cfg: &LossConfig,
) -> Result<LossValueWithGrad> {
    let (mut value, mut gw, gl) = pairwise(w, l, cfg, false)?;
    for t in 0..w.seq_len() {
        value -= w.logp_policy[t];
        gw.logp_policy[t] -= 1.0;
    }
    Ok(LossValueWithGrad {
        value,
        grads: vec![gw, gl],
    })
}

/// Unpaired prospect-style loss against the reference point `z0`, which
/// is treated as a constant.
pub fn simulkto_loss(
    scores: &TokenScores,
    is_preferred: bool,
    z0: f64,
    cfg: &LossConfig,
) -> Result<LossValueWithGrad> {
    cfg.validate()?;
    scores.validate()?;
    if !z0.is_finite() {
        return Err(Error::Domain("z0 must be finite".into()));
    }
    let side = if is_preferred {
        preferred_reward(scores, cfg, true)
    } else {
        rejected_reward(scores, cfg, true)
    };
    let (value, d_sum) = if is_preferred {
        let s = sigmoid(side.sum - z0);
        (cfg.lambda_w - cfg.lambda_w * s, -cfg.lambda_w * s * (1.0 - s))
    } else {
        let s = sigmoid(z0 - side.sum);
        (cfg.lambda_l - cfg.lambda_l * s, cfg.lambda_l * s * (1.0 - s))
    };
    let mut grad = ScoreGrad {
        logp_policy: side.d_logp.iter().map(|d| d_sum * d).collect(),
        confidence: side.d_conf.iter().map(|d| d_sum * d).collect(),
    };
    if !is_preferred {
        grad.confidence.iter_mut().for_each(|c| *c = 0.0);
    }
    Ok(LossValueWithGrad {
        value,
        grads: vec![grad],
    })
}

/// Batch estimate of the KL reference point: the mean confidence-weighted
/// log-ratio, clamped at zero.
pub fn estimate_kto_shift(batch: &[TokenScores]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|s| {
            s.confidence
                .iter()
                .zip(s.logp_policy.iter().zip(&s.logp_ref))
                .map(|(c, (p, r))| c * (p - r))
                .sum::<f64>()
        })
        .sum();
    (total / batch.len() as f64).max(0.0)
}
