//! CSV price ingestion: one file yields one price series per mapped
//! column. Rows with missing cells are dropped (and counted); rows that
//! fail to parse are tolerated up to 5% of the data rows, beyond which
//! ingestion aborts listing the offending line numbers.

use crate::config::InputFile;
use crate::error::{CliError, CliResult};
use chrono::{Datelike, NaiveDate};
use dprisk_core::market::PriceSeries;

/// Share of unparseable data rows above which ingestion hard-fails.
const MAX_UNPARSEABLE_SHARE: f64 = 0.05;
/// Most line numbers quoted in the hard-failure message.
const MAX_QUOTED_LINES: usize = 20;

/// One ingested file: aligned price series plus the row bookkeeping.
#[derive(Debug, Clone)]
pub struct FileIngest {
    /// One series per mapped price column, in header order (or the order
    /// requested in the column spec).
    pub series: Vec<PriceSeries>,
    /// Rows dropped because a mapped cell was empty.
    pub dropped_missing: usize,
    /// Rows dropped because a cell failed to parse (within the 5% budget).
    pub dropped_unparseable: usize,
}

/// Date cell interpretations tried in order: ISO (`2020-01-31`), slashed
/// ISO (`2020/01/31`), US (`01/31/2020`), then a plain number.
fn parse_timestamp(cell: &str) -> Option<f64> {
    for fmt in ["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(cell, fmt) {
            return Some(d.num_days_from_ce() as f64);
        }
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads one CSV file into aligned price series.
///
/// A row is kept only if the date cell (when mapped) and every mapped
/// price cell parse; a row with any empty mapped cell is dropped as
/// missing, and a row with a malformed cell is dropped as unparseable.
/// Without a date column, kept rows are indexed 0, 1, 2, …
pub fn ingest_csv(input: &InputFile) -> CliResult<FileIngest> {
    let path = &input.path;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: bad header: {e}", path.display())))?
        .clone();

    let date_idx: Option<usize> = match &input.date_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Input(format!(
                "{}: date column {name:?} not found in header",
                path.display()
            ))
        })?),
        // Unmapped files: a single header conventionally named "date",
        // "timestamp", or "time" (any case) is taken as the date column;
        // otherwise kept rows are indexed by position.
        None => {
            let candidates: Vec<usize> = headers
                .iter()
                .enumerate()
                .filter(|(_, h)| {
                    let h = h.trim().to_ascii_lowercase();
                    h == "date" || h == "timestamp" || h == "time"
                })
                .map(|(idx, _)| idx)
                .collect();
            match candidates.as_slice() {
                [] => None,
                [one] => Some(*one),
                _ => {
                    return Err(CliError::Input(format!(
                        "{}: several columns look like date columns; \
                         pick one with --date-column",
                        path.display()
                    )));
                }
            }
        }
    };

    let price_cols: Vec<(usize, String)> = match &input.price_columns {
        Some(names) => names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .map(|idx| (idx, name.clone()))
                    .ok_or_else(|| {
                        CliError::Input(format!(
                            "{}: price column {name:?} not found in header",
                            path.display()
                        ))
                    })
            })
            .collect::<CliResult<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(idx, _)| Some(*idx) != date_idx)
            .map(|(idx, h)| (idx, h.to_string()))
            .collect(),
    };
    if price_cols.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no price columns to ingest",
            path.display()
        )));
    }
    {
        let mut names: Vec<&str> = price_cols.iter().map(|(_, n)| n.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Input(format!(
                "{}: duplicate price column names in header or column spec",
                path.display()
            )));
        }
    }

    let mut timestamps: Vec<f64> = Vec::new();
    let mut prices: Vec<Vec<f64>> = vec![Vec::new(); price_cols.len()];
    let mut dropped_missing = 0usize;
    let mut dropped_unparseable = 0usize;
    let mut bad_lines: Vec<u64> = Vec::new();
    let mut data_rows = 0usize;

    for result in reader.records() {
        data_rows += 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                dropped_unparseable += 1;
                if let Some(pos) = e.position() {
                    bad_lines.push(pos.line());
                }
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);

        let cells: Option<Vec<&str>> = {
            let mut out = Vec::with_capacity(price_cols.len() + 1);
            let mut ok = true;
            if let Some(di) = date_idx {
                match record.get(di) {
                    Some(c) => out.push(c),
                    None => ok = false,
                }
            }
            for (idx, _) in &price_cols {
                match record.get(*idx) {
                    Some(c) => out.push(c),
                    None => ok = false,
                }
            }
            ok.then_some(out)
        };
        // A record too short to reach a mapped column is malformed, not
        // merely missing a value.
        let Some(cells) = cells else {
            dropped_unparseable += 1;
            bad_lines.push(line);
            continue;
        };
        if cells.iter().any(|c| c.trim().is_empty()) {
            dropped_missing += 1;
            continue;
        }

        let mut offset = 0usize;
        let ts = if date_idx.is_some() {
            offset = 1;
            match parse_timestamp(cells[0].trim()) {
                Some(t) => t,
                None => {
                    dropped_unparseable += 1;
                    bad_lines.push(line);
                    continue;
                }
            }
        } else {
            timestamps.len() as f64
        };

        let mut parsed = Vec::with_capacity(price_cols.len());
        let mut row_ok = true;
        for cell in &cells[offset..] {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                _ => {
                    row_ok = false;
                    break;
                }
            }
        }
        if !row_ok {
            dropped_unparseable += 1;
            bad_lines.push(line);
            continue;
        }

        timestamps.push(ts);
        for (col, v) in prices.iter_mut().zip(parsed) {
            col.push(v);
        }
    }

    if data_rows > 0 && dropped_unparseable as f64 > MAX_UNPARSEABLE_SHARE * data_rows as f64 {
        let mut quoted: Vec<String> = bad_lines
            .iter()
            .take(MAX_QUOTED_LINES)
            .map(|l| l.to_string())
            .collect();
        if bad_lines.len() > MAX_QUOTED_LINES {
            quoted.push(format!("… and {} more", bad_lines.len() - MAX_QUOTED_LINES));
        }
        return Err(CliError::Input(format!(
            "{}: {dropped_unparseable} of {data_rows} rows are unparseable \
             (more than {:.0}%); lines: {}",
            path.display(),
            MAX_UNPARSEABLE_SHARE * 100.0,
            quoted.join(", ")
        )));
    }

    let series = price_cols
        .iter()
        .zip(prices)
        .map(|((_, name), column)| PriceSeries::new(name.clone(), timestamps.clone(), column))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;

    Ok(FileIngest {
        series,
        dropped_missing,
        dropped_unparseable,
    })
}
