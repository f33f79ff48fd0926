//! Monotonicity, length, syntactic-depth, and token-overlap metrics.

use std::collections::HashMap;

use crate::corpus::{AlignmentMap, DependencyTree};
use crate::error::{Error, Result};

/// Source positions of the aligned hypothesis tokens, in hypothesis order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePositionSequence {
    positions: Vec<usize>,
}

impl SourcePositionSequence {
    pub fn new(positions: Vec<usize>) -> Self {
        Self { positions }
    }

    /// Unaligned hypothesis tokens are dropped; a token linked to several
    /// source words uses the earliest one.
    pub fn from_alignment(alignment: &AlignmentMap) -> Self {
        let positions = (1..=alignment.target_len())
            .filter_map(|t| alignment.sources_of(t).min())
            .collect();
        Self { positions }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Number of pairs `i < j` with `a[i] > a[j]`; ties do not count.
pub fn inversion_count(seq: &SourcePositionSequence) -> u64 {
    let mut buf = seq.positions.clone();
    let mut scratch = vec![0; buf.len()];
    sort_count(&mut buf, &mut scratch)
}

fn sort_count(a: &mut [usize], scratch: &mut [usize]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (lo, hi) = a.split_at_mut(mid);
        let (slo, shi) = scratch.split_at_mut(mid);
        sort_count(lo, slo) + sort_count(hi, shi)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if a[i] <= a[j] {
            scratch[k] = a[i];
            i += 1;
        } else {
            // a[j] is smaller than every remaining element of the left run
            inv += (mid - i) as u64;
            scratch[k] = a[j];
            j += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&a[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&a[j..n]);
    a.copy_from_slice(&scratch[..n]);
    inv
}

/// Normalized inversion rate in percent, with whether it is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nir {
    pub percent: f64,
    pub defined: bool,
}

/// `2 I / (|A| (|A| - 1)) * 100`. Sequences shorter than two report 0 with
/// `defined = false`.
pub fn normalized_inversion_rate(seq: &SourcePositionSequence) -> Nir {
    let n = seq.len();
    if n < 2 {
        return Nir {
            percent: 0.0,
            defined: false,
        };
    }
    let pairs = (n * (n - 1)) as f64;
    Nir {
        percent: 2.0 * inversion_count(seq) as f64 / pairs * 100.0,
        defined: true,
    }
}

/// `|hyp| / |src|` in word units.
pub fn sentence_length_ratio(hyp_len: usize, src_len: usize) -> Result<f64> {
    if src_len == 0 {
        return Err(Error::UndefinedMetric("empty source".into()));
    }
    Ok(hyp_len as f64 / src_len as f64)
}

/// Node count on the longest root-to-leaf path; a lone root has depth 1.
pub fn dependency_depth(tree: &DependencyTree) -> usize {
    let heads = tree.heads();
    let mut depth = vec![0usize; heads.len()];
    fn resolve(i: usize, heads: &[usize], depth: &mut [usize]) -> usize {
        if depth[i] == 0 {
            depth[i] = match heads[i] {
                0 => 1,
                h => resolve(h - 1, heads, depth) + 1,
            };
        }
        depth[i]
    }
    (0..heads.len())
        .map(|i| resolve(i, heads, &mut depth))
        .max()
        .unwrap_or(0)
}

/// Unigram F1 over multiset overlap.
pub fn token_f1<S: AsRef<str>, R: AsRef<str>>(hyp: &[S], reference: &[R]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in reference {
        *counts.entry(tok.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for tok in hyp {
        if let Some(c) = counts.get_mut(tok.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hyp.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}
