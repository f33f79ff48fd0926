//! Running a trained toy model as a simultaneous agent and summarizing its
//! latency/quality tradeoff.

use rayon::prelude::*;

use crate::corpus::{AlignmentMap, Sentence};
use crate::error::{Error, Result};
use crate::latency::{latency_scores, LatencyScores};
use crate::metrics::{normalized_inversion_rate, sentence_length_ratio, token_f1, SourcePositionSequence};
use crate::policy::{run_session, Agent, AgentState, AgentStep, NextToken, PolicyConfig, SessionOutput};
use crate::report::TradeoffRow;

use super::model::ToyModel;
use super::train::PrefixSample;

/// Greedy decoding with the model's confidence head.
#[derive(Debug, Clone, Copy)]
pub struct ToyAgent<'m> {
    model: &'m ToyModel,
}

impl<'m> ToyAgent<'m> {
    pub fn new(model: &'m ToyModel) -> Self {
        Self { model }
    }
}

impl Agent for ToyAgent<'_> {
    fn step(&mut self, state: &AgentState<'_>) -> Result<AgentStep> {
        let m = self.model;
        let ctx = m.context(&m.vocabs.encode_source(state.source), state.source_complete);
        let prev = match state.target.last() {
            None => m.vocabs.bos(),
            Some(w) => m
                .vocabs
                .target
                .get(w)
                .ok_or_else(|| Error::Agent(format!("target word '{w}' unknown to the model")))?,
        };
        let cache = m.step(&ctx, prev);
        let tok = m.greedy(&cache);
        let next_token = if tok == m.vocabs.eos() {
            NextToken::Stop
        } else {
            NextToken::Word(m.vocabs.target.word(tok).to_string())
        };
        Ok(AgentStep {
            next_token,
            confidence: cache.confidence,
            distribution: Some(cache.probs),
        })
    }
}

/// Mean write confidence over the target positions of `samples` (the stop
/// position excluded).
pub fn mean_confidence(model: &ToyModel, samples: &[PrefixSample]) -> Result<f64> {
    let sums: Vec<(f64, usize)> = samples
        .par_iter()
        .map(|s| {
            let ctx = model.context(&model.vocabs.encode_source(&s.source), s.complete);
            let target = model.vocabs.encode_target(&s.target)?;
            let pass = model.score(&ctx, &target);
            Ok((pass.confidence[..target.len()].iter().sum(), target.len()))
        })
        .collect::<Result<_>>()?;
    let (total, count) = sums
        .into_iter()
        .fold((0.0, 0), |(a, b), (s, n)| (a + s, b + n));
    if count == 0 {
        return Err(Error::UndefinedMetric("no target positions".into()));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub source: Sentence,
    pub reference: Sentence,
}

/// Maps a hypothesis back onto its source positions.
pub type Aligner<'a> = dyn Fn(&Sentence, &[String]) -> Result<AlignmentMap> + Sync + 'a;

struct SentenceEval {
    latency: Option<LatencyScores>,
    f1: f64,
    nir: Option<f64>,
    slr: f64,
}

fn evaluate_one(
    session: &SessionOutput,
    item: &EvalItem,
    aligner: Option<&Aligner<'_>>,
) -> Result<SentenceEval> {
    let trace = session.trace.clone().with_ref_len(item.reference.len());
    let latency = if session.hypothesis.is_empty() {
        None
    } else {
        Some(latency_scores(&trace)?)
    };
    let nir = match aligner {
        Some(align) => {
            let a = align(&item.source, &session.hypothesis)?;
            let nir = normalized_inversion_rate(&SourcePositionSequence::from_alignment(&a));
            nir.defined.then_some(nir.percent)
        }
        None => None,
    };
    Ok(SentenceEval {
        latency,
        f1: token_f1(&session.hypothesis, item.reference.tokens()),
        nir,
        slr: sentence_length_ratio(session.hypothesis.len(), item.source.len())?,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Sessions at the given reading length, in input order.
pub fn simulate_corpus(model: &ToyModel, items: &[EvalItem], cfg: &PolicyConfig) -> Result<Vec<SessionOutput>> {
    items
        .par_iter()
        .map(|item| run_session(&mut ToyAgent::new(model), &item.source, cfg))
        .collect()
}

/// One row per reading length: corpus-mean latency (over sentences with a
/// non-empty hypothesis), token F1 against the reference, NIR (when an
/// aligner is given; over sentences where it is defined) and SLR.
pub fn evaluate_tradeoff(
    model: &ToyModel,
    items: &[EvalItem],
    n_values: &[usize],
    threshold: f64,
    max_target_len: usize,
    aligner: Option<&Aligner<'_>>,
) -> Result<Vec<TradeoffRow>> {
    n_values
        .iter()
        .map(|&n| {
            let cfg = PolicyConfig {
                read_length: n,
                threshold,
                max_target_len,
            };
            let sessions = simulate_corpus(model, items, &cfg)?;
            let evals: Vec<SentenceEval> = sessions
                .iter()
                .zip(items)
                .map(|(s, item)| evaluate_one(s, item, aligner))
                .collect::<Result<_>>()?;
            let lat = || evals.iter().filter_map(|e| e.latency);
            let nir = mean(evals.iter().filter_map(|e| e.nir));
            Ok(TradeoffRow {
                n,
                laal: mean(lat().map(|l| l.laal)),
                al: mean(lat().map(|l| l.al)),
                ap: mean(lat().map(|l| l.ap)),
                dal: mean(lat().map(|l| l.dal)),
                token_f1: mean(evals.iter().map(|e| e.f1)),
                nir: if nir.is_nan() { 0.0 } else { nir },
                slr: mean(evals.iter().map(|e| e.slr)),
                dd: None,
            })
        })
        .collect()
}
