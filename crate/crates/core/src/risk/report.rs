//! Tabular risk summaries: per-source blocks of VaR/ESF/Wang values in
//! percent, serializable to JSON and renderable as aligned text.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// One source of risk numbers (e.g. raw sample vs model simulation) over a
/// set of columns (assets and/or a portfolio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBlock {
    /// Row-group label, e.g. "Empirical" or "Copula Estimated".
    pub source: String,
    /// Column labels, e.g. asset names plus "Portfolio".
    pub columns: Vec<String>,
    /// Lower-tail quantiles in percent, indexed `[gamma][column]`.
    pub var_percent: Vec<Vec<f64>>,
    /// Lower-tail averages in percent, indexed `[gamma][column]`.
    pub esf_percent: Vec<Vec<f64>>,
    /// Wang-transform values in percent, indexed `[column]`.
    pub wang_percent: Vec<f64>,
}

/// A full report: the levels, the Wang load, the sign/unit convention, and
/// one block per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// Human-readable statement of the reporting convention.
    pub convention: String,
    /// Tail levels the VaR/ESF rows correspond to.
    pub gammas: Vec<f64>,
    /// Load parameter of the Wang rows.
    pub wang_r: f64,
    pub blocks: Vec<RiskBlock>,
}

/// Default convention note attached to generated reports.
pub const REPORT_CONVENTION: &str =
    "lower-tail return quantiles, losses negative, values in percent";

impl RiskReport {
    /// Render the report as a fixed-width text table. Output depends only
    /// on the stored values, so identical reports render identically.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Risk report ({})", self.convention);
        let levels: Vec<String> = self
            .gammas
            .iter()
            .map(|g| format!("{:.2}%", g * 100.0))
            .collect();
        let _ = writeln!(
            out,
            "Levels: {}; Wang load r = {:.4}",
            levels.join(", "),
            self.wang_r
        );
        for block in &self.blocks {
            let _ = writeln!(out);
            let _ = writeln!(out, "== {} ==", block.source);
            let width = block
                .columns
                .iter()
                .map(|c| c.len())
                .chain(std::iter::once(9))
                .max()
                .unwrap_or(9)
                + 2;
            let mut header = format!("{:<12}", "measure");
            for c in &block.columns {
                let _ = write!(header, "{c:>width$}");
            }
            let _ = writeln!(out, "{header}");
            for (gi, gamma) in self.gammas.iter().enumerate() {
                let mut row = format!("{:<12}", format!("VaR {:.2}%", gamma * 100.0));
                if let Some(vals) = block.var_percent.get(gi) {
                    for v in vals {
                        let _ = write!(row, "{:>width$.4}", v);
                    }
                }
                let _ = writeln!(out, "{row}");
                let mut row = format!("{:<12}", format!("ESF {:.2}%", gamma * 100.0));
                if let Some(vals) = block.esf_percent.get(gi) {
                    for v in vals {
                        let _ = write!(row, "{:>width$.4}", v);
                    }
                }
                let _ = writeln!(out, "{row}");
            }
            let mut row = format!("{:<12}", "Wang");
            for v in &block.wang_percent {
                let _ = write!(row, "{:>width$.4}", v);
            }
            let _ = writeln!(out, "{row}");
        }
        out
    }
}
