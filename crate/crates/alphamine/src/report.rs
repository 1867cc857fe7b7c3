//! CSV tables written by the command line.
//!
//! Floats use Rust's shortest round-trip form; missing values are `NaN`.

use alphamine_core::backtest::EquityCurve;
use alphamine_core::panel::MetricReport;
use alphamine_core::pipeline::{IterationReport, SweepRow};
use alphamine_core::Panel;

use crate::error::Error;

pub const ITERATION_HEADER: &str = "iteration,train_ic,valid_ic,pool_size,q,mean_return";

fn table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

pub fn iterations_csv(rows: &[IterationReport]) -> String {
    table(
        ITERATION_HEADER,
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.iteration, r.train_ic, r.valid_ic, r.pool_size, r.q, r.mean_return
            )
        }),
    )
}

pub fn parse_iterations_csv(text: &str) -> Result<Vec<IterationReport>, Error> {
    let mut lines = text.lines();
    if lines.next() != Some(ITERATION_HEADER) {
        return Err(Error::Checkpoint("report.csv: unexpected header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = || Error::Checkpoint(format!("report.csv line {}: malformed row", i + 2));
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(IterationReport {
                iteration: f[0].parse().map_err(|_| bad())?,
                train_ic: num(f[1])?,
                valid_ic: num(f[2])?,
                pool_size: f[3].parse().map_err(|_| bad())?,
                q: num(f[4])?,
                mean_return: num(f[5])?,
            })
        })
        .collect()
}

/// One row per scored day.
pub fn metric_days_csv(report: &MetricReport, panel: &Panel) -> String {
    table(
        "date,ic,rank_ic",
        report
            .per_day
            .iter()
            .map(|d| format!("{},{},{}", panel.dates()[d.day], d.ic, d.rank_ic)),
    )
}

pub fn metric_summary_csv(split: &str, report: &MetricReport) -> String {
    table(
        "split,days,ic,icir,rank_ic,rank_icir",
        [format!(
            "{split},{},{},{},{},{}",
            report.per_day.len(),
            report.ic,
            report.icir,
            report.rank_ic,
            report.rank_icir
        )],
    )
}

/// A one-line `{key: value, ...}` summary for the terminal.
pub fn metric_summary_line(split: &str, report: &MetricReport) -> String {
    format!(
        "{{split: {split}, days: {}, ic: {}, icir: {}, rank_ic: {}, rank_icir: {}}}",
        report.per_day.len(),
        report.ic,
        report.icir,
        report.rank_ic,
        report.rank_icir
    )
}

pub fn equity_csv(curve: &EquityCurve, panel: &Panel) -> String {
    table(
        "date,value,turnover",
        curve
            .days
            .iter()
            .zip(&curve.values)
            .zip(&curve.turnover)
            .map(|((&t, v), x)| format!("{},{v},{x}", panel.dates()[t])),
    )
}

/// One row per held name per rebalance, best score first.
pub fn holdings_csv(curve: &EquityCurve, panel: &Panel) -> String {
    table(
        "date,rank,symbol",
        curve.rebalances.iter().flat_map(|r| {
            r.stocks
                .iter()
                .enumerate()
                .map(move |(k, &i)| format!("{},{},{}", panel.dates()[r.day], k + 1, panel.symbols()[i]))
        }),
    )
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    table(
        "quantile_level,best_valid_ic,final_train_ic",
        rows.iter()
            .map(|r| format!("{},{},{}", r.level, r.best_valid_ic, r.final_train_ic)),
    )
}

pub fn k_search_csv(valid: &[(usize, f64)]) -> String {
    table("k,valid_cumulative_return", valid.iter().map(|(k, cr)| format!("{k},{cr}")))
}
