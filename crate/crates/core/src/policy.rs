//! Confidence-driven read/write sessions and the wait-k baseline.
//!
//! A session starts with one source word read. At every decision the agent
//! reports a write confidence; at or above the threshold the agent's token
//! is written, otherwise `read_length` more source words are read. Once the
//! source is exhausted every decision is a write, so an agent that never
//! becomes confident still finishes (as a full-sentence translator).

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::latency::{ReadWriteTrace, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextToken {
    Word(String),
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub next_token: NextToken,
    pub confidence: f64,
    /// Optional next-token distribution over the agent's vocabulary.
    pub distribution: Option<Vec<f64>>,
}

/// What an agent sees at one decision point.
#[derive(Debug, Clone, Copy)]
pub struct AgentState<'a> {
    pub source: &'a [String],
    pub source_complete: bool,
    pub target: &'a [String],
}

/// Maps a (source prefix, target prefix) state to a next-token proposal and
/// a write confidence.
pub trait Agent {
    fn step(&mut self, state: &AgentState<'_>) -> Result<AgentStep>;
}

impl<A: Agent + ?Sized> Agent for &mut A {
    fn step(&mut self, state: &AgentState<'_>) -> Result<AgentStep> {
        (**self).step(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub read_length: usize,
    pub threshold: f64,
    pub max_target_len: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            read_length: 1,
            threshold: 0.5,
            max_target_len: 200,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.read_length == 0 {
            return Err(Error::Config("read length must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.max_target_len == 0 {
            return Err(Error::Config("max target length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub hypothesis: Vec<String>,
    pub trace: ReadWriteTrace,
    /// Stopped by `max_target_len` rather than by the agent.
    pub truncated: bool,
}

struct Session<'s> {
    source: &'s [String],
    read: usize,
    events: Vec<TraceEvent>,
    target: Vec<String>,
}

impl<'s> Session<'s> {
    fn new(source: &'s [String]) -> Self {
        Self {
            source,
            read: 0,
            events: Vec::new(),
            target: Vec::new(),
        }
    }

    fn read_up_to(&mut self, k: usize) {
        let k = k.min(self.source.len() - self.read);
        if k > 0 {
            self.read += k;
            self.events.push(TraceEvent::Read(k));
        }
    }

    fn exhausted(&self) -> bool {
        self.read == self.source.len()
    }

    fn query(&self, agent: &mut impl Agent) -> Result<AgentStep> {
        let state = AgentState {
            source: &self.source[..self.read],
            source_complete: self.exhausted(),
            target: &self.target,
        };
        let step = agent.step(&state)?;
        if !(0.0..=1.0).contains(&step.confidence) {
            return Err(Error::Agent(format!(
                "confidence {} outside [0, 1]",
                step.confidence
            )));
        }
        Ok(step)
    }

    fn write(&mut self, word: String) {
        self.events.push(TraceEvent::Write(word.clone()));
        self.target.push(word);
    }

    fn finish(self, truncated: bool) -> Result<SessionOutput> {
        let hyp_len = self.target.len();
        let trace = ReadWriteTrace::new(self.events, self.source.len(), hyp_len)?;
        Ok(SessionOutput {
            hypothesis: self.target,
            trace,
            truncated,
        })
    }
}

/// Runs the confidence-based policy over one streamed source sentence.
/// The trace's reference length defaults to the hypothesis length; set it
/// with [`ReadWriteTrace::with_ref_len`] before computing latency.
pub fn run_session(
    agent: &mut impl Agent,
    source: &Sentence,
    cfg: &PolicyConfig,
) -> Result<SessionOutput> {
    cfg.validate()?;
    let mut s = Session::new(source.tokens());
    s.read_up_to(1);
    loop {
        if s.target.len() >= cfg.max_target_len {
            return s.finish(true);
        }
        let step = s.query(agent)?;
        if step.confidence >= cfg.threshold || s.exhausted() {
            match step.next_token {
                NextToken::Stop => return s.finish(false),
                NextToken::Word(w) => s.write(w),
            }
        } else {
            s.read_up_to(cfg.read_length);
        }
    }
}

/// Fixed wait-k schedule `g(t) = min(k + floor((t - 1) / ratio), |X|)`;
/// `ratio` is the expected target-to-source length ratio. Confidence is
/// ignored.
pub fn run_wait_k(
    agent: &mut impl Agent,
    source: &Sentence,
    k: usize,
    ratio: f64,
    max_target_len: usize,
) -> Result<SessionOutput> {
    if k == 0 {
        return Err(Error::Config("wait-k needs k >= 1".into()));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("wait-k ratio must be positive, got {ratio}")));
    }
    let mut s = Session::new(source.tokens());
    loop {
        if s.target.len() >= max_target_len {
            return s.finish(true);
        }
        let t = s.target.len();
        let need = k + (t as f64 / ratio).floor() as usize;
        s.read_up_to(need.saturating_sub(s.read));
        match s.query(agent)?.next_token {
            NextToken::Stop => return s.finish(false),
            NextToken::Word(w) => s.write(w),
        }
    }
}

/// Replays a fixed list of confidences, one per decision, and writes
/// `tokens` in order before stopping. Once the list runs out the agent is
/// fully confident.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    confidences: Vec<f64>,
    tokens: Vec<String>,
    queries: usize,
}

impl ScriptedAgent {
    pub fn new(confidences: Vec<f64>, tokens: Vec<String>) -> Self {
        Self {
            confidences,
            tokens,
            queries: 0,
        }
    }
}

impl Agent for ScriptedAgent {
    fn step(&mut self, state: &AgentState<'_>) -> Result<AgentStep> {
        let confidence = self.confidences.get(self.queries).copied().unwrap_or(1.0);
        self.queries += 1;
        let next_token = match self.tokens.get(state.target.len()) {
            Some(w) => NextToken::Word(w.clone()),
            None => NextToken::Stop,
        };
        Ok(AgentStep {
            next_token,
            confidence,
            distribution: None,
        })
    }
}

/// Confidence as a pure function of `(words read, target position)`,
/// writing `tokens` in order.
pub struct StateScriptedAgent<F> {
    tokens: Vec<String>,
    confidence: F,
}

impl<F: FnMut(usize, usize) -> f64> StateScriptedAgent<F> {
    pub fn new(tokens: Vec<String>, confidence: F) -> Self {
        Self { tokens, confidence }
    }
}

impl<F: FnMut(usize, usize) -> f64> Agent for StateScriptedAgent<F> {
    fn step(&mut self, state: &AgentState<'_>) -> Result<AgentStep> {
        let t = state.target.len() + 1;
        Ok(AgentStep {
            next_token: self
                .tokens
                .get(t - 1)
                .map_or(NextToken::Stop, |w| NextToken::Word(w.clone())),
            confidence: (self.confidence)(state.source.len(), t),
            distribution: None,
        })
    }
}

/// Copies the `t`-th source word at step `t`: a one-to-one translator.
/// Confident exactly when that word has been read.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityAgent;

impl Agent for IdentityAgent {
    fn step(&mut self, state: &AgentState<'_>) -> Result<AgentStep> {
        let t = state.target.len();
        let (next_token, confidence) = match state.source.get(t) {
            Some(w) => (NextToken::Word(w.clone()), 1.0),
            None if state.source_complete => (NextToken::Stop, 1.0),
            None => (NextToken::Stop, 0.0),
        };
        Ok(AgentStep {
            next_token,
            confidence,
            distribution: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::{average_lagging, delays_from_trace};

    fn src(n: usize) -> Sentence {
        Sentence::new((1..=n).map(|i| format!("s{i}")).collect(), "").unwrap()
    }

    fn words(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("t{i}")).collect()
    }

    fn w(s: &str) -> TraceEvent {
        TraceEvent::Write(s.into())
    }

    #[test]
    fn worked_read_length_two() {
        let mut agent = ScriptedAgent::new(vec![0.9, 0.2, 0.9, 0.9], words(3));
        let cfg = PolicyConfig {
            read_length: 2,
            ..Default::default()
        };
        let out = run_session(&mut agent, &src(4), &cfg).unwrap();
        assert_eq!(
            out.trace.events(),
            [TraceEvent::Read(1), w("t1"), TraceEvent::Read(2), w("t2"), w("t3")]
        );
        assert!(!out.truncated);
    }

    #[test]
    fn always_confident_reads_one_word() {
        let mut agent = ScriptedAgent::new(vec![], words(3));
        let out = run_session(&mut agent, &src(5), &PolicyConfig::default()).unwrap();
        assert_eq!(out.trace.words_read(), 1);
        assert_eq!(delays_from_trace(&out.trace).unwrap().as_slice(), [1, 1, 1]);
    }

    #[test]
    fn never_confident_is_full_sentence() {
        let mut agent = StateScriptedAgent::new(words(3), |_, _| 0.0);
        let cfg = PolicyConfig {
            read_length: 2,
            ..Default::default()
        };
        let out = run_session(&mut agent, &src(4), &cfg).unwrap();
        assert_eq!(
            out.trace.events(),
            [
                TraceEvent::Read(1),
                TraceEvent::Read(2),
                TraceEvent::Read(1),
                w("t1"),
                w("t2"),
                w("t3")
            ]
        );
    }

    #[test]
    fn truncation_flag() {
        let mut agent = ScriptedAgent::new(vec![], words(10));
        let cfg = PolicyConfig {
            max_target_len: 4,
            ..Default::default()
        };
        let out = run_session(&mut agent, &src(3), &cfg).unwrap();
        assert!(out.truncated);
        assert_eq!(out.hypothesis.len(), 4);
    }

    #[test]
    fn bad_agent_confidence_is_an_error() {
        let mut agent = ScriptedAgent::new(vec![1.5], words(1));
        assert!(matches!(
            run_session(&mut agent, &src(2), &PolicyConfig::default()),
            Err(Error::Agent(_))
        ));
    }

    #[test]
    fn wait_k_schedule() {
        let out = run_wait_k(&mut IdentityAgent, &src(6), 3, 1.0, 50).unwrap();
        let g = delays_from_trace(&out.trace).unwrap();
        assert_eq!(g.as_slice(), [3, 4, 5, 6, 6, 6]);
        assert_eq!(average_lagging(&g, 6, 6).unwrap(), 3.0);
        assert_eq!(out.hypothesis, src(6).tokens());

        let out = run_wait_k(&mut IdentityAgent, &src(4), 9, 1.0, 50).unwrap();
        assert_eq!(delays_from_trace(&out.trace).unwrap().as_slice(), [4; 4]);

        let out = run_wait_k(&mut IdentityAgent, &src(5), 1, 1.0, 50).unwrap();
        assert_eq!(delays_from_trace(&out.trace).unwrap().as_slice(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn wait_k_with_ratio() {
        let mut agent = StateScriptedAgent::new(words(6), |_, _| 0.0);
        let out = run_wait_k(&mut agent, &src(6), 2, 2.0, 50).unwrap();
        assert_eq!(delays_from_trace(&out.trace).unwrap().as_slice(), [2, 2, 3, 3, 4, 4]);
    }
}
