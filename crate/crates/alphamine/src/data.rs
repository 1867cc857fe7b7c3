//! Panel CSV ingestion and export.
//!
//! One row per (date, symbol) with header
//! `date,symbol,open,high,low,close,volume,vwap[,tradable]`. Rows may come in
//! any order. Symbols are sorted so that stock index order is symbol order.
//! An empty numeric field is a missing value, and (symbol, date) pairs absent
//! from the file are missing and untradable.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use alphamine_core::expr::Feature;
use alphamine_core::{AlphaMatrix, Panel};
use chrono::NaiveDate;

use crate::error::Error;

const REQUIRED: [&str; 8] = ["date", "symbol", "open", "high", "low", "close", "volume", "vwap"];

struct Row {
    line: u64,
    values: [f64; 6],
    tradable: bool,
}

pub fn load_csv(path: &Path) -> Result<Panel, Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &path.display().to_string())
}

/// Parses a panel from CSV text; `source` names the input in error messages.
pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<Panel, Error> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{source}: {e}")))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let mut cols = [0usize; 8];
    for (slot, name) in cols.iter_mut().zip(REQUIRED) {
        *slot = column(name)
            .ok_or_else(|| Error::Schema(format!("{source}: missing column \"{name}\"")))?;
    }
    let tradable_col = column("tradable");

    let mut rows: BTreeMap<(String, String), Row> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Data(format!("{source}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = field(cols[0]);
        NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| {
            Error::Data(format!("{source}: line {line}: date {date:?} is not YYYY-MM-DD"))
        })?;
        let symbol = field(cols[1]);
        if symbol.is_empty() {
            return Err(Error::Data(format!("{source}: line {line}: empty symbol")));
        }
        let mut values = [f64::NAN; 6];
        for (k, v) in values.iter_mut().enumerate() {
            let name = REQUIRED[k + 2];
            let text = field(cols[k + 2]);
            if !text.is_empty() {
                *v = text.parse().map_err(|_| {
                    Error::Data(format!("{source}: line {line}: {name} {text:?} is not a number"))
                })?;
            }
        }
        let tradable = match tradable_col.map(field) {
            None | Some("") => true,
            Some(t) => parse_bool(t).ok_or_else(|| {
                Error::Data(format!("{source}: line {line}: tradable {t:?} is not a boolean"))
            })?,
        };
        let key = (symbol.to_string(), date.to_string());
        if let Some(prev) = rows.get(&key) {
            return Err(Error::Data(format!(
                "{source}: duplicate row for ({date}, {symbol}) on lines {} and {line}",
                prev.line
            )));
        }
        rows.insert(key, Row { line, values, tradable });
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{source}: no data rows")));
    }

    let mut symbols: Vec<String> = rows.keys().map(|(s, _)| s.clone()).collect();
    symbols.dedup();
    let mut dates: Vec<String> = rows.keys().map(|(_, d)| d.clone()).collect();
    dates.sort();
    dates.dedup();
    let (n, d) = (symbols.len(), dates.len());
    let day_of: BTreeMap<&str, usize> = dates.iter().enumerate().map(|(t, s)| (s.as_str(), t)).collect();
    let mut features: Vec<AlphaMatrix> = (0..6).map(|_| AlphaMatrix::missing(n, d)).collect();
    let mut tradable = vec![false; n * d];
    let mut stock = 0;
    let mut last_symbol: Option<&str> = None;
    for ((symbol, date), row) in &rows {
        if last_symbol.is_some_and(|s| s != symbol) {
            stock += 1;
        }
        last_symbol = Some(symbol);
        let t = day_of[date.as_str()];
        for (m, v) in features.iter_mut().zip(row.values) {
            m.set(stock, t, v);
        }
        tradable[stock * d + t] = row.tradable;
    }
    Panel::new(symbols, dates, features, tradable).map_err(|e| Error::Data(format!("{source}: {e}")))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Some(true),
        "0" | "false" | "f" | "no" => Some(false),
        _ => None,
    }
}

/// Writes every cell of `panel` in the `load_csv` format, date-major.
pub fn write_csv<W: Write>(panel: &Panel, writer: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.push("tradable");
    w.write_record(&header)?;
    for (t, date) in panel.dates().iter().enumerate() {
        for (i, symbol) in panel.symbols().iter().enumerate() {
            let mut rec = vec![date.clone(), symbol.clone()];
            for f in Feature::ALL {
                rec.push(fmt_cell(panel.feature(f).value(i, t)));
            }
            rec.push(if panel.is_tradable(i, t) { "1" } else { "0" }.into());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// Shortest round-trip text for a cell; empty when missing.
pub fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}
