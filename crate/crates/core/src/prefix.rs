//! Alignment-driven prefix-pair extraction.
//!
//! For every source prefix length `L`, the extracted target prefix is the
//! longest one whose tokens are all supported by source words `1..=L`.

use crate::corpus::{AlignmentMap, ParallelExample, PreferenceExample, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrefixPair {
    pub source_prefix_len: usize,
    pub target_prefix_len: usize,
}

/// Effective source index `a_t` for each target position.
///
/// A multiply-linked token takes its largest source index; an unaligned
/// token inherits the running maximum of its predecessors (0 at the start),
/// so it never blocks a prefix on its own.
pub fn effective_alignment(alignment: &AlignmentMap) -> Vec<usize> {
    let mut running = 0;
    (1..=alignment.target_len())
        .map(|t| {
            let a = alignment.sources_of(t).max().unwrap_or(running);
            running = running.max(a);
            a
        })
        .collect()
}

pub fn extract_prefix_pairs(
    source: &Sentence,
    target: &Sentence,
    alignment: &AlignmentMap,
) -> Result<Vec<PrefixPair>> {
    if alignment.source_len() != source.len() || alignment.target_len() != target.len() {
        return Err(Error::Validation(format!(
            "alignment is for {}x{} but the sentence pair is {}x{}",
            alignment.source_len(),
            alignment.target_len(),
            source.len(),
            target.len()
        )));
    }
    let a = effective_alignment(alignment);
    let mut pairs = Vec::new();
    let mut covered = 0;
    for src_len in 1..=source.len() {
        while covered < a.len() && a[covered] <= src_len {
            covered += 1;
        }
        if covered > 0 {
            pairs.push(PrefixPair {
                source_prefix_len: src_len,
                target_prefix_len: covered,
            });
        }
    }
    Ok(pairs)
}

/// Prefix-level preference triples: source prefixes present in both the
/// preferred and rejected extractions, minus those whose two target
/// prefixes coincide.
pub fn build_prefix_preference_dataset(
    example: &PreferenceExample,
    align_w: &AlignmentMap,
    align_l: &AlignmentMap,
) -> Result<Vec<PreferenceExample>> {
    let pw = extract_prefix_pairs(&example.source, &example.preferred, align_w)?;
    let pl = extract_prefix_pairs(&example.source, &example.rejected, align_l)?;
    merge_prefix_pairs(example, &pw, &pl)
}

/// Joins two sorted extractions on source prefix length.
pub(crate) fn merge_prefix_pairs(
    example: &PreferenceExample,
    pw: &[PrefixPair],
    pl: &[PrefixPair],
) -> Result<Vec<PreferenceExample>> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < pw.len() && j < pl.len() {
        let (w, l) = (pw[i], pl[j]);
        match w.source_prefix_len.cmp(&l.source_prefix_len) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let yw = &example.preferred.tokens()[..w.target_prefix_len];
                let yl = &example.rejected.tokens()[..l.target_prefix_len];
                if yw != yl {
                    out.push(PreferenceExample::new(
                        example.source.prefix(w.source_prefix_len)?,
                        example.preferred.prefix(w.target_prefix_len)?,
                        example.rejected.prefix(l.target_prefix_len)?,
                    )?);
                }
                i += 1;
                j += 1;
            }
        }
    }
    Ok(out)
}

/// Prefix-level supervised pairs `(x, y^w)` for one sentence pair.
pub fn prefix_examples(
    source: &Sentence,
    target: &Sentence,
    alignment: &AlignmentMap,
) -> Result<Vec<ParallelExample>> {
    extract_prefix_pairs(source, target, alignment)?
        .into_iter()
        .map(|p| {
            Ok(ParallelExample {
                source: source.prefix(p.source_prefix_len)?,
                preferred: target.prefix(p.target_prefix_len)?,
                rejected: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(n: usize) -> Sentence {
        Sentence::new((0..n).map(|i| format!("w{i}")).collect(), "").unwrap()
    }

    fn pairs(v: &[(usize, usize)]) -> Vec<PrefixPair> {
        v.iter()
            .map(|&(s, t)| PrefixPair {
                source_prefix_len: s,
                target_prefix_len: t,
            })
            .collect()
    }

    #[test]
    fn worked_three_by_two() {
        let a = AlignmentMap::new([(1, 1), (2, 3)], 3, 2).unwrap();
        let got = extract_prefix_pairs(&sent(3), &sent(2), &a).unwrap();
        assert_eq!(got, pairs(&[(1, 1), (2, 1), (3, 2)]));
    }

    #[test]
    fn identity_alignment() {
        let a = AlignmentMap::new([(1, 1), (2, 2)], 2, 2).unwrap();
        let got = extract_prefix_pairs(&sent(2), &sent(2), &a).unwrap();
        assert_eq!(got, pairs(&[(1, 1), (2, 2)]));
    }

    #[test]
    fn late_first_link_skips_short_prefix() {
        let a = AlignmentMap::new([(1, 2), (2, 3)], 3, 2).unwrap();
        let got = extract_prefix_pairs(&sent(3), &sent(2), &a).unwrap();
        assert_eq!(got[0].source_prefix_len, 2);
        assert!(got.iter().all(|p| p.source_prefix_len != 1));
    }

    #[test]
    fn unaligned_and_multi_links() {
        // t1 -> {1,3}, t2 unaligned, t3 -> 2
        let a = AlignmentMap::new([(1, 1), (1, 3), (3, 2)], 3, 3).unwrap();
        assert_eq!(effective_alignment(&a), vec![3, 3, 2]);
        let got = extract_prefix_pairs(&sent(3), &sent(3), &a).unwrap();
        assert_eq!(got, pairs(&[(3, 3)]));

        let a = AlignmentMap::new([(2, 1)], 2, 2).unwrap();
        assert_eq!(effective_alignment(&a), vec![0, 1]);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let a = AlignmentMap::new([(1, 1)], 2, 1).unwrap();
        assert!(extract_prefix_pairs(&sent(3), &sent(1), &a).is_err());
    }

    #[test]
    fn intersection_keeps_shared_source_lengths() {
        let ex = PreferenceExample::new(
            sent(3),
            Sentence::from_text("A B C", "").unwrap(),
            Sentence::from_text("D E F", "").unwrap(),
        )
        .unwrap();
        let pw = pairs(&[(1, 1), (3, 3)]);
        let pl = pairs(&[(2, 1), (3, 3)]);
        let triples = merge_prefix_pairs(&ex, &pw, &pl).unwrap();
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].source.len(), 3);
        assert_eq!(triples[0].rejected.tokens(), ["D", "E", "F"]);
    }

    #[test]
    fn monotone_both_sides() {
        let id = AlignmentMap::new([(1, 1), (2, 2)], 2, 2).unwrap();
        let ex = PreferenceExample::new(
            sent(2),
            Sentence::from_text("A B", "").unwrap(),
            Sentence::from_text("C D", "").unwrap(),
        )
        .unwrap();
        assert_eq!(build_prefix_preference_dataset(&ex, &id, &id).unwrap().len(), 2);
    }

    #[test]
    fn identical_prefixes_dropped() {
        let src = sent(2);
        let yw = Sentence::from_text("A B", "").unwrap();
        let yl = Sentence::from_text("A C", "").unwrap();
        let id = AlignmentMap::new([(1, 1), (2, 2)], 2, 2).unwrap();
        let ex = PreferenceExample::new(src, yw, yl).unwrap();
        let triples = build_prefix_preference_dataset(&ex, &id, &id).unwrap();
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].preferred.tokens(), ["A", "B"]);
    }
}
