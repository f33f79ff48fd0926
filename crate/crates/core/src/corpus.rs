//! Corpus, alignment, dependency-tree, and trace formats.
//!
//! Word units are whitespace tokens for every language. Pre-segmented input
//! (e.g. space-joined Chinese segmentation) is expected upstream.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{ReadWriteTrace, TraceEvent};

/// A whitespace-tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
    language_tag: String,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, language_tag: impl Into<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Validation("sentence has no tokens".into()));
        }
        if tokens.iter().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(Error::Validation(
                "sentence contains an empty or whitespace-bearing token".into(),
            ));
        }
        Ok(Self {
            tokens,
            language_tag: language_tag.into(),
        })
    }

    pub fn from_text(text: &str, language_tag: impl Into<String>) -> Result<Self> {
        Self::new(tokenize(text), language_tag)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The first `len` tokens as a new sentence.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        Self::new(self.tokens[..len.min(self.tokens.len())].to_vec(), self.language_tag.clone())
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// A corpus line: source with a preferred reference and, optionally, a
/// rejected one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelExample {
    pub source: Sentence,
    pub preferred: Sentence,
    pub rejected: Option<Sentence>,
}

impl ParallelExample {
    /// The preference triple, if this line carries a distinct rejected side.
    pub fn preference(&self) -> Option<PreferenceExample> {
        let rejected = self.rejected.clone()?;
        PreferenceExample::new(self.source.clone(), self.preferred.clone(), rejected).ok()
    }
}

/// A `(source, preferred, rejected)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceExample {
    pub source: Sentence,
    pub preferred: Sentence,
    pub rejected: Sentence,
}

impl PreferenceExample {
    pub fn new(source: Sentence, preferred: Sentence, rejected: Sentence) -> Result<Self> {
        if preferred.tokens() == rejected.tokens() {
            return Err(Error::Validation(
                "preferred and rejected references are identical".into(),
            ));
        }
        Ok(Self {
            source,
            preferred,
            rejected,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusRecord {
    src: String,
    tgt_preferred: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tgt_rejected: Option<String>,
}

/// Parses a JSONL corpus from a string. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn parse_jsonl_corpus_str(input: &str) -> Result<Vec<ParallelExample>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let field = |name: &str, text: &str| {
            Sentence::from_text(text, "").map_err(|_| Error::Parse {
                line: lineno,
                message: format!("validation: field {name} is empty"),
            })
        };
        let source = field("src", &record.src)?;
        let preferred = field("tgt_preferred", &record.tgt_preferred)?;
        let rejected = match record.tgt_rejected.as_deref() {
            None => None,
            Some(text) if text.trim().is_empty() => None,
            Some(text) => Some(field("tgt_rejected", text)?),
        };
        if rejected.as_ref().is_some_and(|r| r.tokens() == preferred.tokens()) {
            return Err(Error::Parse {
                line: lineno,
                message: "validation: tgt_preferred and tgt_rejected are identical".into(),
            });
        }
        out.push(ParallelExample {
            source,
            preferred,
            rejected,
        });
    }
    Ok(out)
}

pub fn parse_jsonl_corpus(path: impl AsRef<Path>) -> Result<Vec<ParallelExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl_corpus_str(&text)
}

/// Serializes examples in the corpus JSONL format.
pub fn write_jsonl_corpus<W: Write>(mut out: W, examples: &[ParallelExample]) -> std::io::Result<()> {
    for ex in examples {
        let record = CorpusRecord {
            src: ex.source.text(),
            tgt_preferred: ex.preferred.text(),
            tgt_rejected: ex.rejected.as_ref().map(Sentence::text),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Target-to-source word alignment with 1-based indices on both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMap {
    links: BTreeSet<(usize, usize)>,
    target_len: usize,
    source_len: usize,
}

impl AlignmentMap {
    /// Builds a map from `(target_index, source_index)` links.
    pub fn new(
        links: impl IntoIterator<Item = (usize, usize)>,
        source_len: usize,
        target_len: usize,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (t, s) in links {
            if t == 0 || t > target_len || s == 0 || s > source_len {
                return Err(Error::Validation(format!(
                    "link (target {t}, source {s}) outside [1,{target_len}]x[1,{source_len}]"
                )));
            }
            if !set.insert((t, s)) {
                return Err(Error::Validation(format!("duplicate link ({t}, {s})")));
            }
        }
        Ok(Self {
            links: set,
            target_len,
            source_len,
        })
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().copied()
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// Source indices linked to target position `t` (1-based), ascending.
    pub fn sources_of(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.links.range((t, 0)..=(t, usize::MAX)).map(|&(_, s)| s)
    }

    /// Pharaoh rendering, 0-based `source-target`.
    pub fn to_pharaoh(&self) -> String {
        let mut pairs: Vec<(usize, usize)> = self.links.iter().map(|&(t, s)| (s, t)).collect();
        pairs.sort_unstable();
        pairs
            .iter()
            .map(|(s, t)| format!("{}-{}", s - 1, t - 1))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Parses one Pharaoh line (`i-j` pairs, 0-based source-target).
pub fn parse_pharaoh_alignment(line: &str, src_len: usize, tgt_len: usize) -> Result<AlignmentMap> {
    let mut links = BTreeSet::new();
    for pair in line.split_whitespace() {
        let bad = |why: &str| Error::Parse {
            line: 1,
            message: format!("alignment pair '{pair}': {why}"),
        };
        let (i, j) = pair.split_once('-').ok_or_else(|| bad("expected i-j"))?;
        let i: usize = i.parse().map_err(|_| bad("non-numeric source index"))?;
        let j: usize = j.parse().map_err(|_| bad("non-numeric target index"))?;
        if i >= src_len || j >= tgt_len {
            return Err(bad(&format!(
                "out of range for source length {src_len}, target length {tgt_len}"
            )));
        }
        if !links.insert((j + 1, i + 1)) {
            return Err(bad("duplicate pair"));
        }
    }
    Ok(AlignmentMap {
        links,
        target_len: tgt_len,
        source_len: src_len,
    })
}

/// Reads a Pharaoh file, one line per sentence pair, checking each line
/// against the matching `(src_len, tgt_len)`.
pub fn parse_pharaoh_file(
    path: impl AsRef<Path>,
    lengths: &[(usize, usize)],
) -> Result<Vec<AlignmentMap>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < lengths.len() {
        return Err(Error::Validation(format!(
            "{} has {} alignment lines, expected {}",
            path.display(),
            lines.len(),
            lengths.len()
        )));
    }
    lengths
        .iter()
        .zip(&lines)
        .enumerate()
        .map(|(idx, (&(s, t), line))| {
            parse_pharaoh_alignment(line, s, t).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse {
                    line: idx + 1,
                    message,
                },
                other => other,
            })
        })
        .collect()
}

/// Dependency tree as 1-based heads, 0 marking the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    heads: Vec<usize>,
}

impl DependencyTree {
    pub fn new(heads: Vec<usize>) -> Result<Self> {
        validate_heads(&heads).map_err(|message| Error::Structure {
            sentence: 1,
            message,
        })?;
        Ok(Self { heads })
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn root(&self) -> usize {
        self.heads.iter().position(|&h| h == 0).map_or(0, |i| i + 1)
    }
}

fn validate_heads(heads: &[usize]) -> std::result::Result<(), String> {
    let n = heads.len();
    if n == 0 {
        return Err("empty tree".into());
    }
    let roots = heads.iter().filter(|&&h| h == 0).count();
    if roots != 1 {
        return Err(format!("expected exactly one root, found {roots}"));
    }
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(format!("token {} has head {h} beyond sentence length {n}", i + 1));
        }
        if h == i + 1 {
            return Err(format!("token {} is its own head", i + 1));
        }
    }
    // Every walk toward the root must terminate within n steps.
    for start in 1..=n {
        let mut node = start;
        let mut steps = 0;
        while node != 0 {
            node = heads[node - 1];
            steps += 1;
            if steps > n {
                return Err(format!("cycle through token {start}"));
            }
        }
    }
    Ok(())
}

/// Parses CoNLL-U text, keeping only the ID and HEAD columns.
pub fn parse_conllu_str(input: &str) -> Result<Vec<DependencyTree>> {
    let mut trees = Vec::new();
    let mut heads: Vec<usize> = Vec::new();
    let flush = |heads: &mut Vec<usize>, trees: &mut Vec<DependencyTree>| -> Result<()> {
        if heads.is_empty() {
            return Ok(());
        }
        let ordinal = trees.len() + 1;
        validate_heads(heads).map_err(|message| Error::Structure {
            sentence: ordinal,
            message,
        })?;
        trees.push(DependencyTree {
            heads: std::mem::take(heads),
        });
        Ok(())
    };

    for (idx, raw) in input.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut heads, &mut trees)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        if cols.len() < 7 {
            return Err(bad(format!("expected at least 7 columns, found {}", cols.len())));
        }
        let id: usize = id.parse().map_err(|_| bad(format!("bad ID '{id}'")))?;
        if id != heads.len() + 1 {
            return Err(bad(format!("token ID {id} out of sequence")));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| bad(format!("bad HEAD '{}'", cols[6])))?;
        heads.push(head);
    }
    flush(&mut heads, &mut trees)?;
    Ok(trees)
}

pub fn parse_conllu_depths(path: impl AsRef<Path>) -> Result<Vec<DependencyTree>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu_str(&text)
}

/// One line of a trace JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: usize,
    pub source_len: usize,
    pub ref_len: usize,
    pub events: Vec<EventRepr>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

/// `["R", k]` or `["W", "token"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventRepr {
    Tagged(String, serde_json::Value),
}

impl TraceRecord {
    pub fn from_trace(id: usize, trace: &ReadWriteTrace, truncated: bool) -> Self {
        let events = trace
            .events()
            .iter()
            .map(|e| match e {
                TraceEvent::Read(k) => EventRepr::Tagged("R".into(), (*k).into()),
                TraceEvent::Write(tok) => EventRepr::Tagged("W".into(), tok.clone().into()),
            })
            .collect();
        Self {
            id,
            source_len: trace.source_len(),
            ref_len: trace.ref_len(),
            events,
            truncated,
        }
    }

    pub fn to_trace(&self) -> Result<ReadWriteTrace> {
        let events = self
            .events
            .iter()
            .map(|EventRepr::Tagged(tag, value)| match (tag.as_str(), value) {
                ("R", v) => v
                    .as_u64()
                    .map(|k| TraceEvent::Read(k as usize))
                    .ok_or_else(|| Error::Validation(format!("READ count must be a positive integer, got {v}"))),
                ("W", serde_json::Value::String(s)) => Ok(TraceEvent::Write(s.clone())),
                (tag, v) => Err(Error::Validation(format!("unknown event [{tag:?}, {v}]"))),
            })
            .collect::<Result<Vec<_>>>()?;
        ReadWriteTrace::new(events, self.source_len, self.ref_len)
    }

    /// Written tokens in order.
    pub fn hypothesis(&self) -> Vec<String> {
        self.events
            .iter()
            .filter_map(|EventRepr::Tagged(tag, v)| match (tag.as_str(), v) {
                ("W", serde_json::Value::String(s)) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }
}

pub fn read_trace_jsonl(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_trace_jsonl<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
