//! C ABI over the simulpl core: latency and preference metrics, prefix
//! extraction, the preference losses and toy-model simulation.
//!
//! Every fallible function returns a [`SimulplStatus`]. On failure the
//! message is kept per thread and readable through
//! [`simulpl_last_error_message`]. Handles are opaque and must be released
//! with their `_free` function. Buffers follow a two-call protocol: the
//! required length is always written to `out_len`, and
//! `SIMULPL_STATUS_BUFFER_TOO_SMALL` is returned when `capacity` is short.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use simulpl::corpus::{AlignmentMap, Sentence};
use simulpl::latency::{self, DelayVector, ReadWriteTrace, TraceEvent};
use simulpl::losses::{self, LossConfig, LossValueWithGrad, TerminalMode, TokenScores};
use simulpl::metrics::{self, SourcePositionSequence};
use simulpl::policy::{run_session, PolicyConfig};
use simulpl::prefix;
use simulpl::toy::{self, ToyAgent, ToyModel};
use simulpl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulplStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Input failed validation (bad trace, alignment, scores, config, file).
    Invalid = 3,
    /// The metric is undefined for this input, e.g. an empty hypothesis.
    Undefined = 4,
    BufferTooSmall = 5,
    /// Training, agent or other internal failure.
    Internal = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SimulplStatus {
    match e {
        Error::UndefinedMetric(_) => SimulplStatus::Undefined,
        e if e.is_validation() => SimulplStatus::Invalid,
        _ => SimulplStatus::Internal,
    }
}

struct Failure(SimulplStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(SimulplStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error, and converts panics into a status.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> SimulplStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SimulplStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("panic inside simulpl");
            SimulplStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn string<'a>(ptr: *const c_char, what: &str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(SimulplStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> FfiResult<&'a mut T> {
    ptr.as_mut().ok_or_else(|| null(what))
}

/// Copies `items` into `(buf, capacity)`, always reporting the length.
unsafe fn fill<T: Copy>(items: &[T], buf: *mut T, capacity: usize, out_len: *mut usize) -> FfiResult<()> {
    *out(out_len, "out_len")? = items.len();
    if items.len() > capacity {
        return Err(Failure(
            SimulplStatus::BufferTooSmall,
            format!("need {} elements, capacity is {capacity}", items.len()),
        ));
    }
    if !items.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        std::ptr::copy_nonoverlapping(items.as_ptr(), buf, items.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next simulpl call on the same thread.
#[no_mangle]
pub extern "C" fn simulpl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn simulpl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- latency ----------------------------------------------------------------

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimulplLatency {
    pub al: f64,
    pub laal: f64,
    pub ap: f64,
    pub dal: f64,
}

impl From<latency::LatencyScores> for SimulplLatency {
    fn from(s: latency::LatencyScores) -> Self {
        Self {
            al: s.al,
            laal: s.laal,
            ap: s.ap,
            dal: s.dal,
        }
    }
}

/// Growable READ/WRITE log of one session.
pub struct SimulplTrace {
    events: Vec<TraceEvent>,
    source_len: usize,
    ref_len: usize,
}

impl SimulplTrace {
    fn validated(&self) -> simulpl::Result<ReadWriteTrace> {
        ReadWriteTrace::new(self.events.clone(), self.source_len, self.ref_len)
    }
}

unsafe fn trace_ref<'a>(t: *const SimulplTrace) -> FfiResult<&'a SimulplTrace> {
    t.as_ref().ok_or_else(|| null("trace"))
}

/// Creates an empty trace over a source of `source_len` words with a
/// reference of `ref_len` words.
#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_new(
    source_len: usize,
    ref_len: usize,
    out_trace: *mut *mut SimulplTrace,
) -> SimulplStatus {
    guard(|| {
        let slot = out(out_trace, "out_trace")?;
        if source_len == 0 {
            return Err(Failure(SimulplStatus::Invalid, "source_len must be positive".into()));
        }
        *slot = Box::into_raw(Box::new(SimulplTrace {
            events: Vec::new(),
            source_len,
            ref_len,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_free(trace: *mut SimulplTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Appends a READ of `k` source words; rejects reads past the source end.
#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_read(trace: *mut SimulplTrace, k: usize) -> SimulplStatus {
    guard(|| {
        let t = trace.as_mut().ok_or_else(|| null("trace"))?;
        t.events.push(TraceEvent::Read(k));
        if let Err(e) = t.validated() {
            t.events.pop();
            return Err(e.into());
        }
        Ok(())
    })
}

/// Appends a WRITE of `token`; rejects writes before the first READ.
#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_write(trace: *mut SimulplTrace, token: *const c_char) -> SimulplStatus {
    guard(|| {
        let t = trace.as_mut().ok_or_else(|| null("trace"))?;
        let token = string(token, "token")?;
        t.events.push(TraceEvent::Write(token.to_string()));
        if let Err(e) = t.validated() {
            t.events.pop();
            return Err(e.into());
        }
        Ok(())
    })
}

/// Number of target words written so far.
#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_hyp_len(trace: *const SimulplTrace, out_len: *mut usize) -> SimulplStatus {
    guard(|| {
        *out(out_len, "out_len")? = trace_ref(trace)?.validated()?.hyp_len();
        Ok(())
    })
}

/// Delay vector `g(t)`, one entry per written word.
#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_delays(
    trace: *const SimulplTrace,
    buf: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> SimulplStatus {
    guard(|| {
        let g = latency::delays_from_trace(&trace_ref(trace)?.validated()?)?;
        fill(g.as_slice(), buf, capacity, out_len)
    })
}

/// Hypothesis as space-joined UTF-8, NUL-terminated. `out_len` receives
/// the byte count including the terminator.
#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_hypothesis(
    trace: *const SimulplTrace,
    buf: *mut c_char,
    capacity: usize,
    out_len: *mut usize,
) -> SimulplStatus {
    guard(|| {
        let text = trace_ref(trace)?.validated()?.hypothesis().join(" ");
        let c = CString::new(text).map_err(|_| Failure(SimulplStatus::Invalid, "token contains NUL".into()))?;
        let bytes: Vec<c_char> = c.as_bytes_with_nul().iter().map(|&b| b as c_char).collect();
        fill(&bytes, buf, capacity, out_len)
    })
}

/// AL, LAAL, AP and DAL of a trace. Undefined for an empty hypothesis.
#[no_mangle]
pub unsafe extern "C" fn simulpl_trace_latency(
    trace: *const SimulplTrace,
    out_scores: *mut SimulplLatency,
) -> SimulplStatus {
    guard(|| {
        let scores = latency::latency_scores(&trace_ref(trace)?.validated()?)?;
        *out(out_scores, "out_scores")? = scores.into();
        Ok(())
    })
}

/// Latency metrics from an explicit delay vector.
#[no_mangle]
pub unsafe extern "C" fn simulpl_latency_from_delays(
    delays: *const usize,
    len: usize,
    source_len: usize,
    ref_len: usize,
    out_scores: *mut SimulplLatency,
) -> SimulplStatus {
    guard(|| {
        let g = DelayVector::new(slice(delays, len, "delays")?.to_vec(), source_len)?;
        *out(out_scores, "out_scores")? = SimulplLatency {
            al: latency::average_lagging(&g, source_len, ref_len)?,
            laal: latency::length_adaptive_average_lagging(&g, source_len, ref_len, len)?,
            ap: latency::average_proportion(&g, source_len, len)?,
            dal: latency::differentiable_average_lagging(&g, source_len, ref_len)?,
        };
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimulplWorstCase {
    pub al_worst: f64,
    pub bound: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Worst-case AL through the prefix pair `(prefix_src_len, prefix_tgt_len)`
/// and its linear bound.
#[no_mangle]
pub unsafe extern "C" fn simulpl_worst_case_al_bound(
    prefix_src_len: usize,
    prefix_tgt_len: usize,
    source_len: usize,
    ref_len: usize,
    max_tgt_len: usize,
    out_bound: *mut SimulplWorstCase,
) -> SimulplStatus {
    guard(|| {
        let b = latency::worst_case_al_bound(prefix_src_len, prefix_tgt_len, source_len, ref_len, max_tgt_len)?;
        *out(out_bound, "out_bound")? = SimulplWorstCase {
            al_worst: b.al_worst,
            bound: b.bound,
            c1: b.c1,
            c2: b.c2,
        };
        Ok(())
    })
}

// ---- preference metrics -----------------------------------------------------

/// Pairwise inversions of a source-position sequence.
#[no_mangle]
pub unsafe extern "C" fn simulpl_inversion_count(
    positions: *const usize,
    len: usize,
    out_count: *mut u64,
) -> SimulplStatus {
    guard(|| {
        let seq = SourcePositionSequence::new(slice(positions, len, "positions")?.to_vec());
        *out(out_count, "out_count")? = metrics::inversion_count(&seq);
        Ok(())
    })
}

/// NIR in percent. Sequences shorter than two are undefined.
#[no_mangle]
pub unsafe extern "C" fn simulpl_nir(positions: *const usize, len: usize, out_percent: *mut f64) -> SimulplStatus {
    guard(|| {
        let seq = SourcePositionSequence::new(slice(positions, len, "positions")?.to_vec());
        let slot = out(out_percent, "out_percent")?;
        let nir = metrics::normalized_inversion_rate(&seq);
        if !nir.defined {
            return Err(Failure(SimulplStatus::Undefined, "NIR needs at least two positions".into()));
        }
        *slot = nir.percent;
        Ok(())
    })
}

// ---- prefix extraction ------------------------------------------------------

/// One alignment link, 1-based on both sides.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulplLink {
    pub target: usize,
    pub source: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulplPrefixPair {
    pub source_prefix_len: usize,
    pub target_prefix_len: usize,
}

/// Prefix pairs `(L, T)` of a sentence pair with the given alignment, in
/// increasing source length.
#[no_mangle]
pub unsafe extern "C" fn simulpl_extract_prefixes(
    links: *const SimulplLink,
    n_links: usize,
    source_len: usize,
    target_len: usize,
    buf: *mut SimulplPrefixPair,
    capacity: usize,
    out_len: *mut usize,
) -> SimulplStatus {
    guard(|| {
        let links: Vec<(usize, usize)> = slice(links, n_links, "links")?
            .iter()
            .map(|l| (l.target, l.source))
            .collect();
        let map = AlignmentMap::new(links, source_len, target_len)?;
        let words = |n: usize| Sentence::new((1..=n).map(|i| i.to_string()).collect(), "");
        let pairs: Vec<SimulplPrefixPair> =
            prefix::extract_prefix_pairs(&words(source_len)?, &words(target_len)?, &map)?
                .into_iter()
                .map(|p| SimulplPrefixPair {
                    source_prefix_len: p.source_prefix_len,
                    target_prefix_len: p.target_prefix_len,
                })
                .collect();
        fill(&pairs, buf, capacity, out_len)
    })
}

// ---- losses -----------------------------------------------------------------

/// Per-position scores of one sequence: `len` entries per array, the last
/// one being the stop position.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SimulplTokenScores {
    pub logp_policy: *const f64,
    pub logp_ref: *const f64,
    pub confidence: *const f64,
    pub len: usize,
}

/// Gradient destination for one [`SimulplTokenScores`]; each array holds
/// `len` entries. Either pointer may be null to skip it.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SimulplScoreGrad {
    pub logp_policy: *mut f64,
    pub confidence: *mut f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulplTerminalMode {
    EosLogratio = 0,
    PenaltyOnly = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SimulplLossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_w: f64,
    pub lambda_l: f64,
    pub terminal_mode: SimulplTerminalMode,
}

/// Default loss settings.
#[no_mangle]
pub extern "C" fn simulpl_loss_config_default() -> SimulplLossConfig {
    let d = LossConfig::default();
    SimulplLossConfig {
        alpha: d.alpha,
        beta: d.beta,
        lambda_w: d.lambda_w,
        lambda_l: d.lambda_l,
        terminal_mode: SimulplTerminalMode::EosLogratio,
    }
}

unsafe fn scores(s: *const SimulplTokenScores, what: &str) -> FfiResult<TokenScores> {
    let s = s.as_ref().ok_or_else(|| null(what))?;
    Ok(TokenScores::new(
        slice(s.logp_policy, s.len, "logp_policy")?.to_vec(),
        slice(s.logp_ref, s.len, "logp_ref")?.to_vec(),
        slice(s.confidence, s.len, "confidence")?.to_vec(),
    )?)
}

unsafe fn config(c: *const SimulplLossConfig) -> FfiResult<LossConfig> {
    let c = c.as_ref().ok_or_else(|| null("config"))?;
    Ok(LossConfig {
        alpha: c.alpha,
        beta: c.beta,
        lambda_w: c.lambda_w,
        lambda_l: c.lambda_l,
        terminal_mode: match c.terminal_mode {
            SimulplTerminalMode::EosLogratio => TerminalMode::EosLogRatio,
            SimulplTerminalMode::PenaltyOnly => TerminalMode::PenaltyOnly,
        },
    })
}

unsafe fn emit(result: LossValueWithGrad, out_value: *mut f64, grads: &[*mut SimulplScoreGrad]) -> FfiResult<()> {
    *out(out_value, "out_value")? = result.value;
    for (g, dst) in result.grads.iter().zip(grads) {
        if let Some(dst) = dst.as_mut() {
            for (src, ptr) in [(&g.logp_policy, dst.logp_policy), (&g.confidence, dst.confidence)] {
                if !ptr.is_null() {
                    std::ptr::copy_nonoverlapping(src.as_ptr(), ptr, src.len());
                }
            }
        }
    }
    Ok(())
}

/// Supervised multi-task loss of one sequence. `grad` may be null.
#[no_mangle]
pub unsafe extern "C" fn simulpl_msft_loss(
    sequence: *const SimulplTokenScores,
    out_value: *mut f64,
    grad: *mut SimulplScoreGrad,
) -> SimulplStatus {
    guard(|| emit(losses::msft_loss(&scores(sequence, "sequence")?)?, out_value, &[grad]))
}

/// Pairwise preference loss with a reference model.
#[no_mangle]
pub unsafe extern "C" fn simulpl_simuldpo_loss(
    preferred: *const SimulplTokenScores,
    rejected: *const SimulplTokenScores,
    cfg: *const SimulplLossConfig,
    out_value: *mut f64,
    grad_preferred: *mut SimulplScoreGrad,
    grad_rejected: *mut SimulplScoreGrad,
) -> SimulplStatus {
    guard(|| {
        let r = losses::simuldpo_loss(&scores(preferred, "preferred")?, &scores(rejected, "rejected")?, &config(cfg)?)?;
        emit(r, out_value, &[grad_preferred, grad_rejected])
    })
}

/// Reference-free pairwise loss with a likelihood term on the preferred side.
#[no_mangle]
pub unsafe extern "C" fn simulpl_simulcpo_loss(
    preferred: *const SimulplTokenScores,
    rejected: *const SimulplTokenScores,
    cfg: *const SimulplLossConfig,
    out_value: *mut f64,
    grad_preferred: *mut SimulplScoreGrad,
    grad_rejected: *mut SimulplScoreGrad,
) -> SimulplStatus {
    guard(|| {
        let r = losses::simulcpo_loss(&scores(preferred, "preferred")?, &scores(rejected, "rejected")?, &config(cfg)?)?;
        emit(r, out_value, &[grad_preferred, grad_rejected])
    })
}

/// Unpaired loss of one sequence against the reference point `z0`.
#[no_mangle]
pub unsafe extern "C" fn simulpl_simulkto_loss(
    sequence: *const SimulplTokenScores,
    is_preferred: bool,
    z0: f64,
    cfg: *const SimulplLossConfig,
    out_value: *mut f64,
    grad: *mut SimulplScoreGrad,
) -> SimulplStatus {
    guard(|| {
        let r = losses::simulkto_loss(&scores(sequence, "sequence")?, is_preferred, z0, &config(cfg)?)?;
        emit(r, out_value, &[grad])
    })
}

// ---- toy model --------------------------------------------------------------

/// A trained toy agent loaded from a checkpoint.
pub struct SimulplModel {
    model: ToyModel,
}

#[no_mangle]
pub unsafe extern "C" fn simulpl_model_load(path: *const c_char, out_model: *mut *mut SimulplModel) -> SimulplStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let model = toy::load_checkpoint(Path::new(string(path, "path")?))?;
        *slot = Box::into_raw(Box::new(SimulplModel { model }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn simulpl_model_free(model: *mut SimulplModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the confidence-thresholded read/write policy of `model` over a
/// whitespace-tokenized source, reading `read_length` words per READ.
/// The new trace's reference length is `ref_len`.
#[no_mangle]
pub unsafe extern "C" fn simulpl_model_simulate(
    model: *const SimulplModel,
    source: *const c_char,
    read_length: usize,
    threshold: f64,
    max_target_len: usize,
    ref_len: usize,
    out_trace: *mut *mut SimulplTrace,
) -> SimulplStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let slot = out(out_trace, "out_trace")?;
        let source = Sentence::from_text(string(source, "source")?, "src")?;
        let cfg = PolicyConfig {
            read_length,
            threshold,
            max_target_len,
        };
        let session = run_session(&mut ToyAgent::new(&m.model), &source, &cfg)?;
        *slot = Box::into_raw(Box::new(SimulplTrace {
            events: session.trace.events().to_vec(),
            source_len: source.len(),
            ref_len,
        }));
        Ok(())
    })
}
