//! Brute-force optimum of the length-regularized, KL-constrained reward
//! objective over a tiny sequence space.
//!
//! The optimum is `pi*(y) = pi_ref(y) exp((r(y) + alpha |y|) / beta) / Z`,
//! and inverting it must give back the reward exactly:
//! `r(y) = beta log(pi*(y) / pi_ref(y)) + beta log Z - alpha |y|`.

use crate::error::{Error, Result};

use super::LossConfig;

pub const MAX_ORACLE_VOCAB: usize = 4;
pub const MAX_ORACLE_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPolicy {
    /// Every sequence of length `1..=max_len`, shortest first, then
    /// lexicographic.
    pub sequences: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
    pub log_partition: f64,
    /// Largest `|r_reconstructed(y) - r(y)|` over all sequences.
    pub max_reconstruction_residual: f64,
}

pub fn enumerate_sequences(vocab_size: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|p| {
                (0..vocab_size).map(move |v| {
                    let mut s = p.clone();
                    s.push(v);
                    s
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

pub fn optimal_policy_oracle(
    vocab_size: usize,
    max_len: usize,
    reward_fn: impl Fn(&[usize]) -> f64,
    ref_distribution: impl Fn(&[usize]) -> f64,
    cfg: &LossConfig,
) -> Result<OptimalPolicy> {
    if vocab_size == 0 || max_len == 0 {
        return Err(Error::Size("vocabulary and length must be positive".into()));
    }
    if vocab_size > MAX_ORACLE_VOCAB || max_len > MAX_ORACLE_LEN {
        return Err(Error::Size(format!(
            "enumeration limited to vocab <= {MAX_ORACLE_VOCAB}, length <= {MAX_ORACLE_LEN}; got {vocab_size}, {max_len}"
        )));
    }
    cfg.validate()?;
    let sequences = enumerate_sequences(vocab_size, max_len);
    let refs: Vec<f64> = sequences.iter().map(|y| ref_distribution(y)).collect();
    if refs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Domain("reference probabilities must be positive".into()));
    }
    let mass: f64 = refs.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("reference distribution sums to {mass}")));
    }
    let rewards: Vec<f64> = sequences.iter().map(|y| reward_fn(y)).collect();
    let log_w: Vec<f64> = sequences
        .iter()
        .zip(&refs)
        .zip(&rewards)
        .map(|((y, p), r)| p.ln() + (r + cfg.alpha * y.len() as f64) / cfg.beta)
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = top + log_w.iter().map(|lw| (lw - top).exp()).sum::<f64>().ln();
    let probs: Vec<f64> = log_w.iter().map(|lw| (lw - log_z).exp()).collect();
    let max_reconstruction_residual = sequences
        .iter()
        .zip(probs.iter().zip(&refs))
        .zip(&rewards)
        .map(|((y, (p, q)), r)| {
            let rebuilt = cfg.beta * (p / q).ln() + cfg.beta * log_z - cfg.alpha * y.len() as f64;
            (rebuilt - r).abs()
        })
        .fold(0.0, f64::max);
    Ok(OptimalPolicy {
        sequences,
        probs,
        log_partition: log_z,
        max_reconstruction_residual,
    })
}
