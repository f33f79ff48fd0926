//! Latency/quality tradeoff tables.

use crate::error::{Error, Result};

pub const TRADEOFF_COLUMNS: [&str; 9] = ["n", "LAAL", "AL", "AP", "DAL", "token_F1", "NIR", "SLR", "DD"];

/// Corpus means at one reading length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffRow {
    pub n: usize,
    pub laal: f64,
    pub al: f64,
    pub ap: f64,
    pub dal: f64,
    pub token_f1: f64,
    pub nir: f64,
    pub slr: f64,
    /// Needs parsed hypotheses; absent otherwise.
    pub dd: Option<f64>,
}

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

/// CSV with a fixed column order and six decimals, plus a one-line-per-row
/// summary.
pub fn emit_tradeoff_report(rows: &[TradeoffRow]) -> Result<(String, String)> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    w.write_record(TRADEOFF_COLUMNS).map_err(internal)?;
    let mut summary = String::new();
    for r in rows {
        w.write_record([
            r.n.to_string(),
            fixed(r.laal),
            fixed(r.al),
            fixed(r.ap),
            fixed(r.dal),
            fixed(r.token_f1),
            fixed(r.nir),
            fixed(r.slr),
            r.dd.map(fixed).unwrap_or_default(),
        ])
        .map_err(internal)?;
        summary.push_str(&format!(
            "n={:<3} LAAL={:.3} token_F1={:.3} NIR={:.2} SLR={:.3}\n",
            r.n, r.laal, r.token_f1, r.nir, r.slr
        ));
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(format!("csv: {e}")))?;
    let csv = String::from_utf8(bytes).expect("csv output is utf-8");
    Ok((csv, summary))
}
