//! Synthetic translation task with built-in preferences.
//!
//! Sources mix content words (mapped one-to-one onto target words) with
//! filler words. The preferred reference translates content words in order
//! and drops fillers; the rejected reference keeps filler translations and
//! applies random adjacent swaps, so it is longer and less monotone.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AlignmentMap, ParallelExample, Sentence};
use crate::error::{Error, Result};

use super::vocab::Vocabs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTaskSpec {
    pub content_vocab: usize,
    pub filler_vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a source position holds a filler word.
    pub filler_rate: f64,
    /// Probability of swapping each adjacent pair in the rejected reference.
    pub swap_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            content_vocab: 16,
            filler_vocab: 4,
            min_len: 4,
            max_len: 8,
            filler_rate: 0.2,
            swap_rate: 0.35,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExample {
    pub example: ParallelExample,
    pub align_w: AlignmentMap,
    /// Present iff the rejected reference differs from the preferred one.
    pub align_l: Option<AlignmentMap>,
}

fn content_src(i: usize) -> String {
    format!("s{i}")
}

fn filler_src(i: usize) -> String {
    format!("f{i}")
}

fn content_tgt(i: usize) -> String {
    format!("t{i}")
}

fn filler_tgt(i: usize) -> String {
    format!("g{i}")
}

/// A sampled task instance: spec plus its content-word mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub spec: SyntheticTaskSpec,
    mapping: Vec<usize>,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.content_vocab == 0 {
            return Err(Error::Config("content vocabulary is empty".into()));
        }
        if self.filler_rate > 0.0 && self.filler_vocab == 0 {
            return Err(Error::Config("filler rate is positive but the filler vocabulary is empty".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "need 1 <= min_len <= max_len, got {} and {}",
                self.min_len, self.max_len
            )));
        }
        if self.max_len > self.content_vocab {
            return Err(Error::Config(format!(
                "max_len {} exceeds the content vocabulary {}",
                self.max_len, self.content_vocab
            )));
        }
        for (name, rate) in [("filler_rate", self.filler_rate), ("swap_rate", self.swap_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<SyntheticTask> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_7a5c);
        let mut mapping: Vec<usize> = (0..self.content_vocab).collect();
        mapping.shuffle(&mut rng);
        Ok(SyntheticTask {
            spec: *self,
            mapping,
        })
    }
}

impl SyntheticTask {
    pub fn vocabs(&self) -> Result<Vocabs> {
        let s = &self.spec;
        Vocabs::new(
            (0..s.content_vocab)
                .map(content_src)
                .chain((0..s.filler_vocab).map(filler_src))
                .collect(),
            (0..s.content_vocab)
                .map(content_tgt)
                .chain((0..s.filler_vocab).map(filler_tgt))
                .collect(),
        )
    }

    /// Target word for a source word, if it belongs to the task.
    pub fn translate_word(&self, word: &str) -> Option<String> {
        let parse = |prefix: &str, limit: usize| {
            word.strip_prefix(prefix)
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&i| i < limit)
        };
        if let Some(i) = parse("s", self.spec.content_vocab) {
            Some(content_tgt(self.mapping[i]))
        } else {
            parse("f", self.spec.filler_vocab).map(filler_tgt)
        }
    }

    /// Gold links from hypothesis words back to the source positions whose
    /// translation they are.
    pub fn hypothesis_alignment(&self, source: &Sentence, hyp: &[String]) -> Result<AlignmentMap> {
        let translated: Vec<Option<String>> =
            source.tokens().iter().map(|w| self.translate_word(w)).collect();
        let mut links = Vec::new();
        for (t, word) in hyp.iter().enumerate() {
            for (s, tr) in translated.iter().enumerate() {
                if tr.as_deref() == Some(word.as_str()) {
                    links.push((t + 1, s + 1));
                }
            }
        }
        AlignmentMap::new(links, source.len(), hyp.len())
    }

    /// Draws `count` examples from `seed` (independent of the mapping seed).
    pub fn generate(&self, count: usize, seed: u64) -> Result<Vec<SyntheticExample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample(&mut rng)).collect()
    }

    fn sample(&self, rng: &mut impl Rng) -> Result<SyntheticExample> {
        let s = &self.spec;
        let len = rng.gen_range(s.min_len..=s.max_len);
        let mut is_filler: Vec<bool> = (0..len).map(|_| rng.gen_bool(s.filler_rate)).collect();
        if is_filler.iter().all(|&f| f) {
            let keep = rng.gen_range(0..len);
            is_filler[keep] = false;
        }
        let n_content = is_filler.iter().filter(|&&f| !f).count();
        let mut content = index::sample(rng, s.content_vocab, n_content).into_iter();

        let mut source = Vec::with_capacity(len);
        let mut full = Vec::with_capacity(len);
        for &filler in &is_filler {
            if filler {
                let f = rng.gen_range(0..s.filler_vocab);
                source.push(filler_src(f));
                full.push(filler_tgt(f));
            } else {
                let c = content.next().expect("sampled enough content words");
                source.push(content_src(c));
                full.push(content_tgt(self.mapping[c]));
            }
        }

        let mut preferred = Vec::new();
        let mut links_w = Vec::new();
        for (pos, (word, &filler)) in full.iter().zip(&is_filler).enumerate() {
            if !filler {
                preferred.push(word.clone());
                links_w.push((preferred.len(), pos + 1));
            }
        }

        // rejected: every word kept, in a locally scrambled order
        let mut order: Vec<usize> = (0..len).collect();
        let mut i = 0;
        while i + 1 < len {
            if rng.gen_bool(s.swap_rate) {
                order.swap(i, i + 1);
                i += 2;
            } else {
                i += 1;
            }
        }
        let rejected: Vec<String> = order.iter().map(|&p| full[p].clone()).collect();
        let links_l: Vec<(usize, usize)> = order.iter().enumerate().map(|(t, &p)| (t + 1, p + 1)).collect();

        let align_w = AlignmentMap::new(links_w, len, preferred.len())?;
        let distinct = rejected != preferred;
        let align_l = if distinct {
            Some(AlignmentMap::new(links_l, len, rejected.len())?)
        } else {
            None
        };
        let example = ParallelExample {
            source: Sentence::new(source, "src")?,
            preferred: Sentence::new(preferred, "tgt")?,
            rejected: if distinct {
                Some(Sentence::new(rejected, "tgt")?)
            } else {
                None
            },
        };
        Ok(SyntheticExample {
            example,
            align_w,
            align_l,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{normalized_inversion_rate, sentence_length_ratio, SourcePositionSequence};

    fn task(filler_rate: f64, swap_rate: f64) -> SyntheticTask {
        SyntheticTaskSpec {
            filler_rate,
            swap_rate,
            min_len: 10,
            max_len: 10,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn no_noise_means_no_preferences() {
        let data = task(0.0, 0.0).generate(50, 1).unwrap();
        assert!(data.iter().all(|e| e.example.preference().is_none()));
    }

    #[test]
    fn fillers_shorten_the_preferred_side() {
        let data = task(0.5, 0.0).generate(400, 2).unwrap();
        let mean_w: f64 = data.iter().map(|e| e.example.preferred.len() as f64).sum::<f64>() / 400.0;
        assert!((mean_w - 5.0).abs() < 0.3, "mean preferred length {mean_w}");
        for e in data.iter().filter(|e| e.example.rejected.is_some()) {
            let src = e.example.source.len();
            let slr_w = sentence_length_ratio(e.example.preferred.len(), src).unwrap();
            let slr_l = sentence_length_ratio(e.example.rejected.as_ref().unwrap().len(), src).unwrap();
            assert!(slr_w < slr_l);
        }
    }

    #[test]
    fn swaps_make_the_rejected_side_non_monotone() {
        let data = task(0.2, 0.5).generate(200, 3).unwrap();
        let (mut w, mut l) = (0.0, 0.0);
        for e in &data {
            let nir_w = normalized_inversion_rate(&SourcePositionSequence::from_alignment(&e.align_w));
            assert_eq!(nir_w.percent, 0.0);
            w += nir_w.percent;
            if let Some(a) = &e.align_l {
                l += normalized_inversion_rate(&SourcePositionSequence::from_alignment(a)).percent;
            }
        }
        assert!(l > w);
    }

    #[test]
    fn gold_alignment_recovers_positions() {
        let t = task(0.2, 0.3);
        for e in t.generate(20, 4).unwrap() {
            let a = t
                .hypothesis_alignment(&e.example.source, e.example.preferred.tokens())
                .unwrap();
            assert_eq!(a, e.align_w);
        }
    }

    #[test]
    fn bad_specs_rejected() {
        let bad = SyntheticTaskSpec {
            content_vocab: 0,
            ..Default::default()
        };
        assert!(matches!(bad.build(), Err(Error::Config(_))));
        let bad = SyntheticTaskSpec {
            swap_rate: 1.5,
            ..Default::default()
        };
        assert!(bad.build().is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let t = task(0.2, 0.3);
        assert_eq!(t.generate(10, 9).unwrap(), t.generate(10, 9).unwrap());
        assert_ne!(t.generate(10, 9).unwrap(), t.generate(10, 10).unwrap());
    }
}
