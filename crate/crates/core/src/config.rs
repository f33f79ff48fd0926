//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Later sources
//! (command-line overrides) replace earlier ones key by key.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::toy::ToyConfig;

pub type Settings = BTreeMap<String, String>;

pub fn parse_settings(input: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (i, raw) in input.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, found '{line}'"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(out)
}

pub fn load_settings(path: impl AsRef<Path>) -> Result<Settings> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_settings(&text)
}

/// Parses one `key=value` command-line override.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{arg}' is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{value}' for {key}"))),
    }
}

pub const TOY_KEYS: [&str; 25] = [
    "seed",
    "content_vocab",
    "filler_vocab",
    "min_len",
    "max_len",
    "filler_rate",
    "swap_rate",
    "train_size",
    "eval_size",
    "hidden",
    "init_scale",
    "batch_size",
    "msft_epochs",
    "msft_lr",
    "pref_epochs",
    "pref_lr",
    "loss",
    "alpha",
    "beta",
    "lambda_w",
    "lambda_l",
    "terminal_mode",
    "prefix_conditioned_ref",
    "threshold",
    "max_target_len",
];

pub fn apply_toy_setting(cfg: &mut ToyConfig, key: &str, value: &str) -> Result<()> {
    let lc = &mut cfg.preference.loss_cfg;
    match key {
        "seed" => cfg.seed = parse(key, value)?,
        "content_vocab" => cfg.task.content_vocab = parse(key, value)?,
        "filler_vocab" => cfg.task.filler_vocab = parse(key, value)?,
        "min_len" => cfg.task.min_len = parse(key, value)?,
        "max_len" => cfg.task.max_len = parse(key, value)?,
        "filler_rate" => cfg.task.filler_rate = parse(key, value)?,
        "swap_rate" => cfg.task.swap_rate = parse(key, value)?,
        "train_size" => cfg.train_size = parse(key, value)?,
        "eval_size" => cfg.eval_size = parse(key, value)?,
        "hidden" => cfg.hidden = parse(key, value)?,
        "init_scale" => cfg.init_scale = parse(key, value)?,
        "batch_size" => cfg.batch_size = parse(key, value)?,
        "msft_epochs" => cfg.msft_epochs = parse(key, value)?,
        "msft_lr" => cfg.msft_lr = parse(key, value)?,
        "pref_epochs" => cfg.pref_epochs = parse(key, value)?,
        "pref_lr" => cfg.pref_lr = parse(key, value)?,
        "loss" => cfg.preference.loss = value.parse()?,
        "alpha" => lc.alpha = parse(key, value)?,
        "beta" => lc.beta = parse(key, value)?,
        "lambda_w" => lc.lambda_w = parse(key, value)?,
        "lambda_l" => lc.lambda_l = parse(key, value)?,
        "terminal_mode" => lc.terminal_mode = value.parse()?,
        "prefix_conditioned_ref" => cfg.preference.prefix_conditioned_ref = parse_bool(key, value)?,
        "threshold" => cfg.threshold = parse(key, value)?,
        "max_target_len" => cfg.max_target_len = parse(key, value)?,
        other => return Err(Error::Config(format!("unknown setting '{other}'"))),
    }
    Ok(())
}

/// Defaults, then `settings` in key order.
pub fn toy_config_from(settings: &Settings) -> Result<ToyConfig> {
    let mut cfg = ToyConfig::default();
    for (k, v) in settings {
        apply_toy_setting(&mut cfg, k, v)?;
    }
    cfg.task.validate()?;
    cfg.preference.loss_cfg.validate()?;
    if cfg.hidden == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("hidden and batch_size must be positive".into()));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", cfg.threshold)));
    }
    Ok(cfg)
}

/// The effective configuration as a settings file.
pub fn render_toy_config(cfg: &ToyConfig) -> String {
    let lc = &cfg.preference.loss_cfg;
    let t = &cfg.task;
    let values: [String; 25] = [
        cfg.seed.to_string(),
        t.content_vocab.to_string(),
        t.filler_vocab.to_string(),
        t.min_len.to_string(),
        t.max_len.to_string(),
        t.filler_rate.to_string(),
        t.swap_rate.to_string(),
        cfg.train_size.to_string(),
        cfg.eval_size.to_string(),
        cfg.hidden.to_string(),
        cfg.init_scale.to_string(),
        cfg.batch_size.to_string(),
        cfg.msft_epochs.to_string(),
        cfg.msft_lr.to_string(),
        cfg.pref_epochs.to_string(),
        cfg.pref_lr.to_string(),
        cfg.preference.loss.name().to_string(),
        lc.alpha.to_string(),
        lc.beta.to_string(),
        lc.lambda_w.to_string(),
        lc.lambda_l.to_string(),
        match lc.terminal_mode {
            crate::losses::TerminalMode::EosLogRatio => "eos-logratio".to_string(),
            crate::losses::TerminalMode::PenaltyOnly => "penalty-only".to_string(),
        },
        cfg.preference.prefix_conditioned_ref.to_string(),
        cfg.threshold.to_string(),
        cfg.max_target_len.to_string(),
    ];
    TOY_KEYS
        .iter()
        .zip(values)
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}
