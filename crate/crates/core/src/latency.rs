//! Delay-based latency metrics over read/write traces.
//!
//! All quantities are in source words. `g(t)` is the number of source words
//! read when the `t`-th target word was written.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    /// Consume `k` more source words.
    Read(usize),
    /// Emit one target word.
    Write(String),
}

/// Ordered READ/WRITE log of one simultaneous session.
///
/// A session may stop before consuming the whole source, so the READ total
/// is bounded by `source_len` rather than required to equal it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadWriteTrace {
    events: Vec<TraceEvent>,
    source_len: usize,
    ref_len: usize,
}

impl ReadWriteTrace {
    pub fn new(events: Vec<TraceEvent>, source_len: usize, ref_len: usize) -> Result<Self> {
        let mut read = 0usize;
        for (i, ev) in events.iter().enumerate() {
            match ev {
                TraceEvent::Read(0) => {
                    return Err(Error::Validation(format!("event {}: READ of zero words", i + 1)))
                }
                TraceEvent::Read(k) => read += k,
                TraceEvent::Write(_) if read == 0 => {
                    return Err(Error::Validation(format!(
                        "event {}: WRITE before any READ",
                        i + 1
                    )))
                }
                TraceEvent::Write(_) => {}
            }
        }
        if read > source_len {
            return Err(Error::Validation(format!(
                "trace reads {read} words but the source has {source_len}"
            )));
        }
        Ok(Self {
            events,
            source_len,
            ref_len,
        })
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn ref_len(&self) -> usize {
        self.ref_len
    }

    pub fn with_ref_len(mut self, ref_len: usize) -> Self {
        self.ref_len = ref_len;
        self
    }

    pub fn hyp_len(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Write(_)))
            .count()
    }

    pub fn words_read(&self) -> usize {
        self.events
            .iter()
            .map(|e| match e {
                TraceEvent::Read(k) => *k,
                TraceEvent::Write(_) => 0,
            })
            .sum()
    }

    pub fn hypothesis(&self) -> Vec<String> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Write(w) => Some(w.clone()),
                TraceEvent::Read(_) => None,
            })
            .collect()
    }
}

/// Per-token delays `g(1..=|y|)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayVector {
    g: Vec<usize>,
}

impl DelayVector {
    pub fn new(g: Vec<usize>, source_len: usize) -> Result<Self> {
        if let Some(w) = g.windows(2).find(|w| w[1] < w[0]) {
            return Err(Error::Validation(format!(
                "delays must be non-decreasing, found {} after {}",
                w[1], w[0]
            )));
        }
        if g.iter().any(|&d| d == 0 || d > source_len) {
            return Err(Error::Validation(format!(
                "delays must lie in [1, {source_len}]"
            )));
        }
        Ok(Self { g })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

pub fn delays_from_trace(trace: &ReadWriteTrace) -> Result<DelayVector> {
    let mut read = 0;
    let mut g = Vec::with_capacity(trace.hyp_len());
    for ev in trace.events() {
        match ev {
            TraceEvent::Read(k) => read += k,
            TraceEvent::Write(_) => g.push(read),
        }
    }
    DelayVector::new(g, trace.source_len())
}

fn check_lengths(g: &DelayVector, source_len: usize, ref_len: usize) -> Result<()> {
    if g.is_empty() {
        return Err(Error::UndefinedMetric("empty hypothesis".into()));
    }
    if source_len == 0 || ref_len == 0 {
        return Err(Error::UndefinedMetric(
            "source and reference lengths must be positive".into(),
        ));
    }
    if let Some(&d) = g.as_slice().iter().max() {
        if d > source_len {
            return Err(Error::Validation(format!(
                "delay {d} exceeds source length {source_len}"
            )));
        }
    }
    Ok(())
}

/// Shared lagging sum with target-to-source rate `rate`.
fn lagging(g: &DelayVector, source_len: usize, rate: f64) -> f64 {
    let g = g.as_slice();
    let tau = g
        .iter()
        .position(|&d| d == source_len)
        .map_or(g.len(), |i| i + 1);
    let sum: f64 = g[..tau]
        .iter()
        .enumerate()
        .map(|(i, &d)| d as f64 - i as f64 / rate)
        .sum();
    sum / tau as f64
}

/// Average Lagging.
pub fn average_lagging(g: &DelayVector, source_len: usize, ref_len: usize) -> Result<f64> {
    check_lengths(g, source_len, ref_len)?;
    Ok(lagging(g, source_len, ref_len as f64 / source_len as f64))
}

/// Length-adaptive Average Lagging: the rate uses the longer of reference
/// and hypothesis, so over-generation is not rewarded.
pub fn length_adaptive_average_lagging(
    g: &DelayVector,
    source_len: usize,
    ref_len: usize,
    hyp_len: usize,
) -> Result<f64> {
    check_lengths(g, source_len, ref_len)?;
    let rate = ref_len.max(hyp_len) as f64 / source_len as f64;
    Ok(lagging(g, source_len, rate))
}

/// Average Proportion.
pub fn average_proportion(g: &DelayVector, source_len: usize, hyp_len: usize) -> Result<f64> {
    check_lengths(g, source_len, 1)?;
    if hyp_len != g.len() {
        return Err(Error::Validation(format!(
            "hypothesis length {hyp_len} does not match {} delays",
            g.len()
        )));
    }
    let sum: usize = g.as_slice().iter().sum();
    Ok(sum as f64 / (source_len as f64 * hyp_len as f64))
}

/// Differentiable Average Lagging. The first adjusted delay is `g(1)`;
/// later ones are at least one source-per-target step after their
/// predecessor.
pub fn differentiable_average_lagging(
    g: &DelayVector,
    source_len: usize,
    ref_len: usize,
) -> Result<f64> {
    check_lengths(g, source_len, ref_len)?;
    let step = source_len as f64 / ref_len as f64;
    let mut prev: Option<f64> = None;
    let mut sum = 0.0;
    for (i, &d) in g.as_slice().iter().enumerate() {
        let adj = match prev {
            None => d as f64,
            Some(p) => (d as f64).max(p + step),
        };
        sum += adj - i as f64 * step;
        prev = Some(adj);
    }
    Ok(sum / g.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyScores {
    pub al: f64,
    pub laal: f64,
    pub ap: f64,
    pub dal: f64,
}

/// All four metrics for one trace.
pub fn latency_scores(trace: &ReadWriteTrace) -> Result<LatencyScores> {
    let g = delays_from_trace(trace)?;
    let (src, rf, hyp) = (trace.source_len(), trace.ref_len(), trace.hyp_len());
    Ok(LatencyScores {
        al: average_lagging(&g, src, rf)?,
        laal: length_adaptive_average_lagging(&g, src, rf, hyp)?,
        ap: average_proportion(&g, src, hyp)?,
        dal: differentiable_average_lagging(&g, src, rf)?,
    })
}

/// Worst-case AL for a session passing through the prefix pair
/// `(prefix_src_len, prefix_tgt_len)`, and the linear bound in the target
/// prefix length that dominates it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseBound {
    pub al_worst: f64,
    pub bound: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn worst_case_al_bound(
    prefix_src_len: usize,
    prefix_tgt_len: usize,
    source_len: usize,
    ref_len: usize,
    max_tgt_len: usize,
) -> Result<WorstCaseBound> {
    if prefix_src_len == 0 || prefix_src_len > source_len {
        return Err(Error::Domain(format!(
            "need 0 < |x| <= |X|, got |x|={prefix_src_len}, |X|={source_len}"
        )));
    }
    if prefix_tgt_len == 0 || prefix_tgt_len > ref_len || ref_len > max_tgt_len {
        return Err(Error::Domain(format!(
            "need 0 < |y| <= |Y| <= N, got |y|={prefix_tgt_len}, |Y|={ref_len}, N={max_tgt_len}"
        )));
    }
    let x = prefix_src_len as f64;
    let y = prefix_tgt_len as f64;
    let big_x = source_len as f64;
    let al_worst = x - big_x / (2.0 * ref_len as f64) * (y - 1.0);
    let c1 = big_x / (2.0 * max_tgt_len as f64);
    let c2 = c1 + big_x;
    Ok(WorstCaseBound {
        al_worst,
        bound: -c1 * y + c2,
        c1,
        c2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(g: &[usize], src: usize) -> DelayVector {
        DelayVector::new(g.to_vec(), src).unwrap()
    }

    fn w(s: &str) -> TraceEvent {
        TraceEvent::Write(s.into())
    }

    #[test]
    fn delays_accumulate_reads() {
        let t = ReadWriteTrace::new(
            vec![TraceEvent::Read(3), w("a"), w("b"), TraceEvent::Read(3), w("c")],
            6,
            3,
        )
        .unwrap();
        assert_eq!(delays_from_trace(&t).unwrap().as_slice(), [3, 3, 6]);
    }

    #[test]
    fn full_sentence_delays() {
        let t = ReadWriteTrace::new(vec![TraceEvent::Read(4), w("a"), w("b")], 4, 2).unwrap();
        assert_eq!(delays_from_trace(&t).unwrap().as_slice(), [4, 4]);
    }

    #[test]
    fn write_first_is_invalid() {
        assert!(ReadWriteTrace::new(vec![w("a"), TraceEvent::Read(1)], 1, 1).is_err());
        assert!(ReadWriteTrace::new(vec![TraceEvent::Read(5)], 4, 1).is_err());
    }

    #[test]
    fn al_worked_values() {
        assert_eq!(average_lagging(&dv(&[3, 4, 5, 6, 6, 6], 6), 6, 6).unwrap(), 3.0);
        assert_eq!(average_lagging(&dv(&[6; 6], 6), 6, 6).unwrap(), 6.0);
        assert_eq!(average_lagging(&dv(&[1, 2, 3], 3), 3, 3).unwrap(), 1.0);
        assert!(matches!(
            average_lagging(&dv(&[], 3), 3, 3),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn laal_worked_values() {
        let g = dv(&[3, 4, 5, 6, 6, 6], 6);
        assert_eq!(
            length_adaptive_average_lagging(&g, 6, 6, 6).unwrap(),
            average_lagging(&g, 6, 6).unwrap()
        );
        assert_eq!(length_adaptive_average_lagging(&dv(&[6; 6], 6), 6, 6, 20).unwrap(), 6.0);
        assert!((length_adaptive_average_lagging(&g, 6, 6, 12).unwrap() - 3.75).abs() < 1e-12);
    }

    #[test]
    fn ap_worked_values() {
        assert_eq!(average_proportion(&dv(&[5; 4], 5), 5, 4).unwrap(), 1.0);
        assert!((average_proportion(&dv(&[1, 2, 3], 3), 3, 3).unwrap() - 6.0 / 9.0).abs() < 1e-12);
        assert_eq!(average_proportion(&dv(&[1], 4), 4, 1).unwrap(), 0.25);
    }

    #[test]
    fn dal_worked_values() {
        assert_eq!(
            differentiable_average_lagging(&dv(&[3, 4, 5, 6, 6, 6], 6), 6, 6).unwrap(),
            3.0
        );
        for n in 1..8 {
            let g = dv(&vec![n; n], n);
            assert!((differentiable_average_lagging(&g, n, n).unwrap() - n as f64).abs() < 1e-12);
        }
    }

    fn random_trace(rng: &mut ChaCha8Rng) -> (DelayVector, usize, usize) {
        let src = rng.gen_range(1..15);
        let hyp = rng.gen_range(1..15);
        let mut g: Vec<usize> = (0..hyp).map(|_| rng.gen_range(1..=src)).collect();
        g.sort_unstable();
        let rf = rng.gen_range(1..15);
        (dv(&g, src), src, rf)
    }

    #[test]
    fn dal_dominates_al() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (g, src, rf) = random_trace(&mut rng);
            let al = average_lagging(&g, src, rf).unwrap();
            let dal = differentiable_average_lagging(&g, src, rf).unwrap();
            assert!(dal >= al - 1e-9, "g={:?} src={src} ref={rf}", g.as_slice());
        }
    }

    #[test]
    fn bound_worked_values() {
        let b = worst_case_al_bound(10, 4, 10, 8, 20).unwrap();
        assert!((b.al_worst - 8.125).abs() < 1e-12);
        assert!((b.bound - 9.25).abs() < 1e-12);
        let b = worst_case_al_bound(3, 1, 7, 5, 9).unwrap();
        assert_eq!(b.al_worst, 3.0);
        assert!(b.al_worst <= b.bound);
        assert!(worst_case_al_bound(0, 1, 3, 3, 3).is_err());
        assert!(worst_case_al_bound(1, 4, 3, 3, 3).is_err());
    }

    proptest! {
        #[test]
        fn splitting_reads_preserves_metrics(chunks in prop::collection::vec((1usize..4, 0usize..3), 1..6)) {
            let mut coarse = Vec::new();
            let mut fine = Vec::new();
            let mut src = 0;
            for (i, &(k, writes)) in chunks.iter().enumerate() {
                src += k;
                coarse.push(TraceEvent::Read(k));
                fine.extend((0..k).map(|_| TraceEvent::Read(1)));
                let writes = if i == 0 { writes.max(1) } else { writes };
                for _ in 0..writes {
                    coarse.push(w("x"));
                    fine.push(w("x"));
                }
            }
            let a = ReadWriteTrace::new(coarse, src, 5).unwrap();
            let b = ReadWriteTrace::new(fine, src, 5).unwrap();
            let g = delays_from_trace(&a).unwrap();
            prop_assert!(g.as_slice().windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(&g, &delays_from_trace(&b).unwrap());
            prop_assert_eq!(latency_scores(&a).unwrap(), latency_scores(&b).unwrap());
        }
    }
}
