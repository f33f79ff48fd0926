//! Corpus-level subcommands: prefix extraction, simulation and evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use simulpl::corpus::{
    parse_conllu_depths, parse_jsonl_corpus, parse_pharaoh_alignment, read_trace_jsonl, write_jsonl_corpus,
    write_trace_jsonl, AlignmentMap, ParallelExample, TraceRecord,
};
use simulpl::latency::latency_scores;
use simulpl::metrics::{
    dependency_depth, normalized_inversion_rate, sentence_length_ratio, token_f1, SourcePositionSequence,
};
use simulpl::policy::{run_session, run_wait_k, IdentityAgent, PolicyConfig, ScriptedAgent, SessionOutput};
use simulpl::prefix::{build_prefix_preference_dataset, prefix_examples};
use simulpl::toy::{load_checkpoint, ToyAgent};
use simulpl::{Error, Result};

use crate::{cell, csv_string, io_err, write_all};

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Alignment line `idx` (0-based) of `lines`, checked against the pair.
fn alignment_at(lines: &[String], idx: usize, src_len: usize, tgt_len: usize, path: &Path) -> Result<AlignmentMap> {
    let line = lines.get(idx).ok_or_else(|| {
        Error::Validation(format!(
            "{} has {} lines but line {} is needed",
            path.display(),
            lines.len(),
            idx + 1
        ))
    })?;
    parse_pharaoh_alignment(line, src_len, tgt_len).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            line: idx + 1,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Write the prefix-level preference dataset of a corpus as JSONL.
#[derive(Args, Debug)]
pub struct ExtractPrefixesArgs {
    /// Corpus JSONL with src, tgt_preferred and tgt_rejected fields
    #[arg(long)]
    corpus: PathBuf,
    /// Pharaoh alignments between each source and its preferred reference
    #[arg(long)]
    align_w: PathBuf,
    /// Pharaoh alignments between each source and its rejected reference
    #[arg(long, required_unless_present = "supervised")]
    align_l: Option<PathBuf>,
    /// Emit supervised (source prefix, preferred prefix) pairs instead of preference triples
    #[arg(long)]
    supervised: bool,
    /// Output JSONL path (stdout when omitted)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

pub fn extract_prefixes(a: ExtractPrefixesArgs) -> Result<()> {
    let corpus = parse_jsonl_corpus(&a.corpus)?;
    let lines_w = read_lines(&a.align_w)?;
    let lines_l = match &a.align_l {
        Some(p) if !a.supervised => Some((p.as_path(), read_lines(p)?)),
        _ => None,
    };
    let per_example: Vec<Vec<ParallelExample>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let aw = alignment_at(&lines_w, i, ex.source.len(), ex.preferred.len(), &a.align_w)?;
            if a.supervised {
                return prefix_examples(&ex.source, &ex.preferred, &aw);
            }
            let Some(pref) = ex.preference() else {
                return Ok(Vec::new());
            };
            let (path_l, lines_l) = lines_l.as_ref().expect("required unless supervised");
            let al = alignment_at(lines_l, i, ex.source.len(), pref.rejected.len(), path_l)?;
            Ok(build_prefix_preference_dataset(&pref, &aw, &al)?
                .into_iter()
                .map(|p| ParallelExample {
                    source: p.source,
                    preferred: p.preferred,
                    rejected: Some(p.rejected),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let flat: Vec<ParallelExample> = per_example.into_iter().flatten().collect();
    let mut buf = Vec::new();
    write_jsonl_corpus(&mut buf, &flat).expect("writing to memory");
    write_all(a.output.as_deref(), &buf)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    /// Replays per-sentence tokens and confidences from --script
    Scripted,
    /// Fixed wait-k schedule; translates with --checkpoint, or copies the source when absent
    WaitK,
    /// Confidence policy driven by a toy-model checkpoint
    Toy,
}

/// Run an agent over a corpus and write read/write traces.
#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Corpus JSONL; tgt_preferred is the reference for LAAL
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    agent: AgentKind,
    /// Scripted agent JSONL, one {"tokens": [..], "confidences": [..]} line per sentence
    #[arg(long, required_if_eq("agent", "scripted"))]
    script: Option<PathBuf>,
    /// Toy-model checkpoint
    #[arg(long, required_if_eq("agent", "toy"))]
    checkpoint: Option<PathBuf>,
    /// Wait-k lag
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Expected target/source length ratio of the wait-k schedule
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    /// Source words read per READ decision
    #[arg(long, default_value_t = 1)]
    read_length: usize,
    /// Confidence threshold for writing
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 200)]
    max_target_len: usize,
    /// Trace JSONL output (stdout when omitted)
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Hypotheses output, one sentence per line
    #[arg(long)]
    hypotheses: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ScriptLine {
    tokens: Vec<String>,
    confidences: Vec<f64>,
}

fn read_script(path: &Path) -> Result<Vec<ScriptLine>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let corpus = parse_jsonl_corpus(&a.corpus)?;
    let cfg = PolicyConfig {
        read_length: a.read_length,
        threshold: a.threshold,
        max_target_len: a.max_target_len,
    };
    cfg.validate()?;
    let model = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let script = match (a.agent, &a.script) {
        (AgentKind::Scripted, Some(p)) => {
            let s = read_script(p)?;
            if s.len() != corpus.len() {
                return Err(Error::Validation(format!(
                    "script has {} entries for {} sentences",
                    s.len(),
                    corpus.len()
                )));
            }
            s
        }
        _ => Vec::new(),
    };
    let sessions: Vec<SessionOutput> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, ex)| match a.agent {
            AgentKind::Scripted => {
                let s = &script[i];
                run_session(&mut ScriptedAgent::new(s.confidences.clone(), s.tokens.clone()), &ex.source, &cfg)
            }
            AgentKind::WaitK => match &model {
                Some(m) => run_wait_k(&mut ToyAgent::new(m), &ex.source, a.k, a.ratio, a.max_target_len),
                None => run_wait_k(&mut IdentityAgent, &ex.source, a.k, a.ratio, a.max_target_len),
            },
            AgentKind::Toy => run_session(
                &mut ToyAgent::new(model.as_ref().expect("required for toy")),
                &ex.source,
                &cfg,
            ),
        })
        .collect::<Result<_>>()?;
    let records: Vec<TraceRecord> = sessions
        .iter()
        .zip(&corpus)
        .enumerate()
        .map(|(i, (s, ex))| TraceRecord::from_trace(i, &s.trace.clone().with_ref_len(ex.preferred.len()), s.truncated))
        .collect();
    let mut buf = Vec::new();
    write_trace_jsonl(&mut buf, &records).expect("writing to memory");
    write_all(a.traces.as_deref(), &buf)?;
    if let Some(p) = &a.hypotheses {
        let text: String = sessions.iter().map(|s| s.hypothesis.join(" ") + "\n").collect();
        write_all(Some(p), text.as_bytes())?;
    }
    Ok(())
}

/// Per-sentence and corpus-mean AL, LAAL, AP and DAL of a trace file as CSV.
#[derive(Args, Debug)]
pub struct EvalLatencyArgs {
    /// Trace JSONL with events encoded as ["R", k] / ["W", "token"]
    #[arg(long)]
    traces: PathBuf,
    /// Output CSV path (stdout when omitted)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

pub fn eval_latency(a: EvalLatencyArgs) -> Result<()> {
    let records = read_trace_jsonl(&a.traces)?;
    let scores: Vec<Option<[f64; 4]>> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let trace = r.to_trace().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if trace.hyp_len() == 0 {
                return Ok(None);
            }
            let s = latency_scores(&trace)?;
            Ok(Some([s.al, s.laal, s.ap, s.dal]))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<String>> = records
        .iter()
        .zip(&scores)
        .map(|(r, s)| {
            let mut row = vec![r.id.to_string()];
            row.extend((0..4).map(|k| cell(s.map(|v| v[k]))));
            row
        })
        .collect();
    let mut mean_row = vec!["mean".to_string()];
    mean_row.extend((0..4).map(|k| cell(mean(scores.iter().flatten().map(|v| v[k])))));
    rows.push(mean_row);
    let csv = csv_string(&["id", "AL", "LAAL", "AP", "DAL"], &rows)?;
    write_all(a.output.as_deref(), csv.as_bytes())
}

/// Per-sentence and corpus-mean NIR, DD, SLR and token F1 of hypotheses as CSV.
#[derive(Args, Debug)]
pub struct EvalPreferenceArgs {
    /// Corpus JSONL giving each source and its reference (tgt_preferred)
    #[arg(long)]
    corpus: PathBuf,
    /// Hypotheses, one whitespace-tokenized sentence per line
    #[arg(long)]
    hypotheses: PathBuf,
    /// Pharaoh alignments between each source and its hypothesis
    #[arg(long)]
    alignments: PathBuf,
    /// CoNLL-U parses of the non-empty hypotheses, in order
    #[arg(long)]
    conllu: Option<PathBuf>,
    /// Output CSV path (stdout when omitted)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

pub fn eval_preference(a: EvalPreferenceArgs) -> Result<()> {
    let corpus = parse_jsonl_corpus(&a.corpus)?;
    let hyps: Vec<Vec<String>> = read_lines(&a.hypotheses)?
        .iter()
        .map(|l| simulpl::corpus::tokenize(l))
        .collect();
    if hyps.len() != corpus.len() {
        return Err(Error::Validation(format!(
            "{} hypotheses for {} sentences",
            hyps.len(),
            corpus.len()
        )));
    }
    let align_lines = read_lines(&a.alignments)?;
    let mut depths: Vec<Option<usize>> = vec![None; hyps.len()];
    if let Some(p) = &a.conllu {
        let trees = parse_conllu_depths(p)?;
        let non_empty: Vec<usize> = (0..hyps.len()).filter(|&i| !hyps[i].is_empty()).collect();
        if trees.len() != non_empty.len() {
            return Err(Error::Validation(format!(
                "{} dependency trees for {} non-empty hypotheses",
                trees.len(),
                non_empty.len()
            )));
        }
        for (i, tree) in non_empty.into_iter().zip(&trees) {
            depths[i] = Some(dependency_depth(tree));
        }
    }
    let per: Vec<[Option<f64>; 4]> = corpus
        .par_iter()
        .zip(&hyps)
        .enumerate()
        .map(|(i, (ex, hyp))| {
            let align = alignment_at(&align_lines, i, ex.source.len(), hyp.len(), &a.alignments)?;
            let nir = normalized_inversion_rate(&SourcePositionSequence::from_alignment(&align));
            Ok([
                nir.defined.then_some(nir.percent),
                depths[i].map(|d| d as f64),
                Some(sentence_length_ratio(hyp.len(), ex.source.len())?),
                Some(token_f1(hyp, ex.preferred.tokens())),
            ])
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<String>> = per
        .iter()
        .enumerate()
        .map(|(i, v)| std::iter::once(i.to_string()).chain(v.iter().map(|x| cell(*x))).collect())
        .collect();
    let mut mean_row = vec!["mean".to_string()];
    mean_row.extend((0..4).map(|k| cell(mean(per.iter().filter_map(|v| v[k])))));
    rows.push(mean_row);
    let csv = csv_string(&["id", "NIR", "DD", "SLR", "token_F1"], &rows)?;
    write_all(a.output.as_deref(), csv.as_bytes())
}
