//! Loss evaluation, gradient checks, toy training and annotation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use simulpl::config::{load_settings, parse_override, render_toy_config, toy_config_from, Settings};
use simulpl::corpus::{parse_jsonl_corpus, write_jsonl_corpus, ParallelExample, Sentence};
use simulpl::gradcheck::{loss_gradient_suite, LossKind};
use simulpl::losses::{
    estimate_kto_shift, msft_loss, simulcpo_loss, simuldpo_loss, simulkto_loss, LossConfig, TerminalMode,
    TokenScores,
};
use simulpl::prompt::{render_preference_prompt, PromptTemplate};
use simulpl::report::emit_tradeoff_report;
use simulpl::toy::{
    evaluate_tradeoff, load_checkpoint, run_msft, run_preference, save_checkpoint, Aligner, EvalItem, TrainReport,
};
use simulpl::{Error, Result};

use crate::{cell, csv_string, io_err, write_all};

/// Evaluate a loss on a JSONL file of token-score records.
#[derive(Args, Debug)]
pub struct LossArgs {
    /// msft, simuldpo, simulcpo or simulkto
    #[arg(long)]
    kind: LossKind,
    /// JSONL records {"preferred": scores, "rejected": scores}; scores hold logp_policy, logp_ref and confidence arrays
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_w: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_l: f64,
    /// eos-logratio or penalty-only
    #[arg(long, default_value = "eos-logratio")]
    terminal_mode: TerminalMode,
    /// KTO reference point; estimated from the whole file when omitted
    #[arg(long)]
    z0: Option<f64>,
    /// Output CSV path (stdout when omitted)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ScoreRecord {
    preferred: Option<TokenScores>,
    rejected: Option<TokenScores>,
}

fn read_score_records(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        for s in rec.preferred.iter().chain(&rec.rejected) {
            s.validate().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        out.push(rec);
    }
    Ok(out)
}

fn need<'a>(s: &'a Option<TokenScores>, side: &str, idx: usize) -> Result<&'a TokenScores> {
    s.as_ref()
        .ok_or_else(|| Error::Validation(format!("record {idx} lacks the {side} scores")))
}

pub fn loss(a: LossArgs) -> Result<()> {
    let cfg = LossConfig {
        alpha: a.alpha,
        beta: a.beta,
        lambda_w: a.lambda_w,
        lambda_l: a.lambda_l,
        terminal_mode: a.terminal_mode,
    };
    cfg.validate()?;
    let records = read_score_records(&a.input)?;
    let z0 = match a.z0 {
        Some(z) => z,
        None => {
            let all: Vec<TokenScores> = records
                .iter()
                .flat_map(|r| r.preferred.iter().chain(&r.rejected).cloned())
                .collect();
            estimate_kto_shift(&all)
        }
    };
    let values: Vec<f64> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(match a.kind {
                LossKind::Msft => msft_loss(need(&r.preferred, "preferred", i)?)?.value,
                LossKind::SimulDpo => {
                    simuldpo_loss(need(&r.preferred, "preferred", i)?, need(&r.rejected, "rejected", i)?, &cfg)?.value
                }
                LossKind::SimulCpo => {
                    simulcpo_loss(need(&r.preferred, "preferred", i)?, need(&r.rejected, "rejected", i)?, &cfg)?.value
                }
                LossKind::SimulKto => {
                    if r.preferred.is_none() && r.rejected.is_none() {
                        return Err(Error::Validation(format!("record {i} has no scores")));
                    }
                    let mut v = 0.0;
                    if let Some(s) = &r.preferred {
                        v += simulkto_loss(s, true, z0, &cfg)?.value;
                    }
                    if let Some(s) = &r.rejected {
                        v += simulkto_loss(s, false, z0, &cfg)?.value;
                    }
                    v
                }
            })
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<String>> = values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), cell(Some(*v))])
        .collect();
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    rows.push(vec!["mean".into(), cell(mean)]);
    write_all(a.output.as_deref(), csv_string(&["id", "loss"], &rows)?.as_bytes())
}

/// Compare analytic loss gradients with central finite differences.
#[derive(Args, Debug)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per loss
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest acceptable relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

pub fn grad_check(a: GradCheckArgs) -> Result<()> {
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {}", a.step)));
    }
    let rows = loss_gradient_suite(a.seed, a.instances, a.step);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kind.name().to_string(),
                r.instances.to_string(),
                format!("{:.3e}", r.max_rel_error),
                if r.max_rel_error < a.tolerance { "pass" } else { "fail" }.to_string(),
            ]
        })
        .collect();
    write_all(
        None,
        csv_string(&["loss", "instances", "max_rel_error", "status"], &table)?.as_bytes(),
    )?;
    match rows.iter().find(|r| r.max_rel_error.is_nan() || r.max_rel_error >= a.tolerance) {
        Some(r) => Err(Error::Check(format!(
            "{} gradient error {:.3e} exceeds {:.1e}",
            r.kind.name(),
            r.max_rel_error,
            a.tolerance
        ))),
        None => Ok(()),
    }
}

/// Train the toy agent: supervised phase, then preference optimization.
#[derive(Args, Debug)]
pub struct TrainToyArgs {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// simuldpo, simulcpo or simulkto
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Condition the reference model on the source prefix instead of the full source
    #[arg(long)]
    prefix_conditioned_ref: bool,
    /// Reading lengths of the tradeoff evaluation
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    n: Vec<usize>,
    /// Directory receiving checkpoints, curves and reports
    #[arg(long)]
    out_dir: PathBuf,
}

/// Config file, then `--set`, then dedicated flags.
fn collect_settings(
    config: Option<&Path>,
    overrides: &[String],
    flags: impl IntoIterator<Item = (&'static str, Option<String>)>,
) -> Result<Settings> {
    let mut settings = match config {
        Some(p) => load_settings(p)?,
        None => Settings::new(),
    };
    for o in overrides {
        let (k, v) = parse_override(o)?;
        settings.insert(k, v);
    }
    for (k, v) in flags {
        if let Some(v) = v {
            settings.insert(k.to_string(), v);
        }
    }
    Ok(settings)
}

fn curve_rows(phase: &str, report: &TrainReport) -> Vec<Vec<String>> {
    report
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(e, l)| vec![phase.to_string(), (e + 1).to_string(), l.to_string()])
        .collect()
}

pub fn train_toy(a: TrainToyArgs) -> Result<()> {
    let settings = collect_settings(
        a.config.as_deref(),
        &a.set,
        [
            ("seed", a.seed.map(|v| v.to_string())),
            ("loss", a.loss.clone()),
            ("alpha", a.alpha.map(|v| v.to_string())),
            ("beta", a.beta.map(|v| v.to_string())),
            ("prefix_conditioned_ref", a.prefix_conditioned_ref.then(|| "true".to_string())),
        ],
    )?;
    let cfg = toy_config_from(&settings)?;
    let dir = &a.out_dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_all(Some(&dir.join("config.txt")), render_toy_config(&cfg).as_bytes())?;

    let base = run_msft(&cfg)?;
    save_checkpoint(dir.join("msft.ckpt"), &base.model)?;
    let (policy, pref_report) = run_preference(&cfg, &base)?;
    save_checkpoint(dir.join("policy.ckpt"), &policy)?;

    let mut curves = curve_rows("msft", &base.report);
    curves.extend(curve_rows(cfg.preference.loss.name(), &pref_report));
    write_all(
        Some(&dir.join("curves.csv")),
        csv_string(&["phase", "epoch", "loss"], &curves)?.as_bytes(),
    )?;

    let eval: Vec<ParallelExample> = base.eval.iter().map(|e| e.example.clone()).collect();
    let mut buf = Vec::new();
    write_jsonl_corpus(&mut buf, &eval).expect("writing to memory");
    write_all(Some(&dir.join("eval.jsonl")), &buf)?;

    let items = base.eval_items();
    let aligner = base.aligner();
    let mut summary = String::new();
    for (name, model) in [("msft", &base.model), ("policy", &policy)] {
        let rows = evaluate_tradeoff(model, &items, &a.n, cfg.threshold, cfg.max_target_len, Some(&aligner as &Aligner))?;
        let (csv, text) = emit_tradeoff_report(&rows)?;
        write_all(Some(&dir.join(format!("tradeoff_{name}.csv"))), csv.as_bytes())?;
        summary.push_str(&format!("[{name}]\n{text}"));
    }
    let last = |r: &TrainReport| r.epoch_losses.last().copied();
    let head = format!(
        "msft final loss {}\n{} final loss {}\n",
        cell(last(&base.report)),
        cfg.preference.loss.name(),
        cell(last(&pref_report)),
    );
    write_all(None, (head + &summary).as_bytes())
}

/// Latency/quality tradeoff of a toy checkpoint across reading lengths.
#[derive(Args, Debug)]
pub struct TradeoffArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus JSONL; tgt_preferred is the reference
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated reading lengths
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    n: Vec<usize>,
    /// Confidence threshold for writing
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 200)]
    max_target_len: usize,
    /// Training configuration of a synthetic-task checkpoint; enables NIR from gold alignments
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when omitted)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

pub fn tradeoff(a: TradeoffArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let items: Vec<EvalItem> = parse_jsonl_corpus(&a.corpus)?
        .into_iter()
        .map(|e| EvalItem {
            source: e.source,
            reference: e.preferred,
        })
        .collect();
    let task = match &a.config {
        Some(p) => Some(toy_config_from(&load_settings(p)?)?.task()?),
        None => None,
    };
    let aligner = task
        .as_ref()
        .map(|t| move |src: &Sentence, hyp: &[String]| t.hypothesis_alignment(src, hyp));
    let rows = evaluate_tradeoff(
        &model,
        &items,
        &a.n,
        a.threshold,
        a.max_target_len,
        aligner.as_ref().map(|f| f as &Aligner),
    )?;
    let (csv, summary) = emit_tradeoff_report(&rows)?;
    write_all(a.output.as_deref(), csv.as_bytes())?;
    if a.output.is_some() {
        write_all(None, summary.as_bytes())?;
    }
    Ok(())
}

/// Request preferred translations from a chat-completion endpoint.
///
/// Each output line keeps the source, takes the returned translation as the
/// preferred reference and the original reference as the rejected one.
#[derive(Args, Debug)]
pub struct AnnotateArgs {
    /// Corpus JSONL whose tgt_preferred is the original reference
    #[arg(long)]
    corpus: PathBuf,
    /// Prompt template file; the bundled Chinese-to-English template when omitted
    #[arg(long)]
    template: Option<PathBuf>,
    /// Chat-completion endpoint URL
    #[arg(long, required_unless_present = "dry_run")]
    endpoint: Option<String>,
    /// Model identifier sent with each request
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    /// Largest number of concurrent requests
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// Write the rendered prompts as JSONL instead of calling the endpoint
    #[arg(long)]
    dry_run: bool,
    /// Output JSONL path (stdout when omitted)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct PromptRecord<'a> {
    id: usize,
    prompt: &'a str,
}

pub fn annotate(a: AnnotateArgs) -> Result<()> {
    let template = match &a.template {
        Some(p) => PromptTemplate::parse(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
        None => PromptTemplate::bundled_zh_en(),
    };
    let corpus = parse_jsonl_corpus(&a.corpus)?;
    let prompts: Vec<String> = corpus
        .iter()
        .map(|ex| render_preference_prompt(&template, ex))
        .collect::<Result<_>>()?;
    if a.dry_run {
        let text: String = prompts
            .iter()
            .enumerate()
            .map(|(id, prompt)| serde_json::to_string(&PromptRecord { id, prompt }).expect("serializable") + "\n")
            .collect();
        return write_all(a.output.as_deref(), text.as_bytes());
    }
    let endpoint = a.endpoint.expect("required unless dry run");
    let texts = request_annotations(&prompts, &endpoint, &a.model, a.max_in_flight)?;
    let out: Vec<ParallelExample> = corpus
        .into_iter()
        .zip(texts)
        .map(|(ex, text)| {
            let preferred = Sentence::from_text(&text, ex.preferred.language_tag())
                .map_err(|_| Error::Protocol("endpoint returned an empty translation".into()))?;
            let rejected = (preferred.tokens() != ex.preferred.tokens()).then_some(ex.preferred);
            Ok(ParallelExample {
                source: ex.source,
                preferred,
                rejected,
            })
        })
        .collect::<Result<_>>()?;
    let mut buf = Vec::new();
    write_jsonl_corpus(&mut buf, &out).expect("writing to memory");
    write_all(a.output.as_deref(), &buf)
}

#[cfg(feature = "annotate")]
fn request_annotations(prompts: &[String], endpoint: &str, model: &str, max_in_flight: usize) -> Result<Vec<String>> {
    use simulpl::annotate::{AnnotateClient, AnnotationRequest};
    let client = AnnotateClient::from_env()?;
    let reqs: Vec<AnnotationRequest> = prompts
        .iter()
        .map(|p| AnnotationRequest {
            prompt: p.clone(),
            model: model.to_string(),
            endpoint: endpoint.to_string(),
        })
        .collect();
    client
        .annotate_all(&reqs, max_in_flight)
        .into_iter()
        .map(|r| r.map(|resp| resp.text))
        .collect()
}

#[cfg(not(feature = "annotate"))]
fn request_annotations(_: &[String], _: &str, _: &str, _: usize) -> Result<Vec<String>> {
    Err(Error::Config("this build has no annotation client; rebuild with the annotate feature".into()))
}
