//! Top-k equal-weight long-only backtest.
//!
//! On each rebalance day (the first day of the range, then every
//! `rebalance_every` days) the strategy ranks tradable stocks with a valid
//! score and close by score, descending, ties to the lower symbol index, and
//! holds the top `k` at equal weight from that day's close. Between
//! rebalances weights drift with prices. A name without a close on some day
//! keeps its last price. Trading costs `cost_bps` per unit of traded weight,
//! charged on the rebalance day.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::expr::Feature;
use crate::matrix::AlphaMatrix;
use crate::panel::Panel;

#[derive(Clone, Debug, PartialEq)]
pub enum BacktestError {
    /// Strict mode only: fewer than `k` eligible stocks on a rebalance day.
    InsufficientUniverse { day: usize, available: usize, k: usize },
    Argument(&'static str),
}

impl fmt::Display for BacktestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BacktestError::InsufficientUniverse { day, available, k } => {
                write!(f, "day {day}: {available} eligible stocks, need {k}")
            }
            BacktestError::Argument(m) => f.write_str(m),
        }
    }
}

impl core::error::Error for BacktestError {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyConfig {
    pub k: usize,
    pub rebalance_every: usize,
    /// One-way cost in basis points of traded value.
    pub cost_bps: f64,
    /// Fail instead of holding every eligible name when fewer than `k` exist.
    pub strict: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            k: 40,
            rebalance_every: 5,
            cost_bps: 0.0,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rebalance {
    pub day: usize,
    /// Stock indices held from this day, best score first.
    pub stocks: Vec<usize>,
    /// Traded weight: sum of |target - drifted| weights.
    pub turnover: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquityCurve {
    /// Panel day indices.
    pub days: Vec<usize>,
    /// Portfolio value at each day's close, after that day's trading costs.
    pub values: Vec<f64>,
    /// Traded weight per day, zero off rebalance days.
    pub turnover: Vec<f64>,
    pub rebalances: Vec<Rebalance>,
}

/// `final / initial - 1`. The initial value is the capital of 1 held before
/// the first day's trades.
pub fn cumulative_return(curve: &EquityCurve) -> f64 {
    curve.values.last().map_or(0.0, |v| v - 1.0)
}

/// Stocks to hold on `day`: eligible names ranked by score.
pub fn select_top_k(scores: &AlphaMatrix, panel: &Panel, day: usize, k: usize) -> Vec<usize> {
    let close = panel.feature(Feature::Close);
    let mut eligible: Vec<usize> = (0..panel.n_stocks())
        .filter(|&i| panel.is_tradable(i, day) && !scores.is_missing(i, day) && !close.is_missing(i, day))
        .collect();
    eligible.sort_by(|&a, &b| {
        scores
            .value(b, day)
            .total_cmp(&scores.value(a, day))
            .then(a.cmp(&b))
    });
    eligible.truncate(k);
    eligible
}

pub fn run_backtest(
    scores: &AlphaMatrix,
    panel: &Panel,
    cfg: &StrategyConfig,
    days: Range<usize>,
) -> Result<EquityCurve, BacktestError> {
    if cfg.k == 0 || cfg.rebalance_every == 0 {
        return Err(BacktestError::Argument("k and rebalance_every must be positive"));
    }
    if !(cfg.cost_bps >= 0.0) {
        return Err(BacktestError::Argument("cost_bps must be non-negative"));
    }
    if scores.n_stocks() != panel.n_stocks() || scores.n_days() != panel.n_days() {
        return Err(BacktestError::Argument("scores do not match the panel shape"));
    }
    let days = days.start..days.end.min(panel.n_days());
    if days.is_empty() {
        return Err(BacktestError::Argument("empty date range"));
    }
    let n = panel.n_stocks();
    let close = panel.feature(Feature::Close);
    let cost = cfg.cost_bps / 10_000.0;

    let mut last_price: Vec<f64> = (0..n).map(|i| close.value(i, days.start)).collect();
    let mut weights = vec![0.0; n];
    let mut value = 1.0;
    let mut curve = EquityCurve {
        days: Vec::with_capacity(days.len()),
        values: Vec::with_capacity(days.len()),
        turnover: Vec::with_capacity(days.len()),
        rebalances: Vec::new(),
    };

    for t in days.clone() {
        if t > days.start {
            // Mark to market from the previous close.
            let mut growth = 0.0;
            let mut invested = 0.0;
            for i in 0..n {
                let px = close.value(i, t);
                let g = if weights[i] != 0.0 && !px.is_nan() && last_price[i] > 0.0 {
                    px / last_price[i]
                } else {
                    1.0
                };
                growth += weights[i] * g;
                invested += weights[i];
                weights[i] *= g;
            }
            let total = growth + (1.0 - invested);
            value *= total;
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            }
        }
        for i in 0..n {
            let px = close.value(i, t);
            if !px.is_nan() {
                last_price[i] = px;
            }
        }

        let mut traded = 0.0;
        if (t - days.start) % cfg.rebalance_every == 0 {
            let picks = select_top_k(scores, panel, t, cfg.k);
            if picks.len() < cfg.k && cfg.strict {
                return Err(BacktestError::InsufficientUniverse {
                    day: t,
                    available: picks.len(),
                    k: cfg.k,
                });
            }
            let mut target = vec![0.0; n];
            for &i in &picks {
                target[i] = 1.0 / picks.len() as f64;
            }
            traded = weights.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum();
            value *= 1.0 - cost * traded;
            weights = target;
            curve.rebalances.push(Rebalance {
                day: t,
                stocks: picks,
                turnover: traded,
            });
        }
        curve.days.push(t);
        curve.values.push(value);
        curve.turnover.push(traded);
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KSearch {
    /// (k, cumulative return on the validation days).
    pub valid: Vec<(usize, f64)>,
    pub best_k: usize,
    /// Cumulative return of `best_k` on the test days.
    pub test_return: f64,
}

/// Picks `k` by validation cumulative return (ties to the smaller k) and
/// reports it on the test days.
pub fn search_k(
    scores: &AlphaMatrix,
    panel: &Panel,
    base: &StrategyConfig,
    ks: &[usize],
    valid: Range<usize>,
    test: Range<usize>,
) -> Result<KSearch, BacktestError> {
    if ks.is_empty() {
        return Err(BacktestError::Argument("no k to search"));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let cfg = StrategyConfig { k, ..*base };
        let cr = cumulative_return(&run_backtest(scores, panel, &cfg, valid.clone())?);
        rows.push((k, cr));
    }
    let (mut best_k, mut best_cr) = rows[0];
    for &(k, cr) in &rows[1..] {
        if cr > best_cr || (cr == best_cr && k < best_k) {
            (best_k, best_cr) = (k, cr);
        }
    }
    let cfg = StrategyConfig { k: best_k, ..*base };
    let test_return = cumulative_return(&run_backtest(scores, panel, &cfg, test)?);
    Ok(KSearch {
        valid: rows,
        best_k,
        test_return,
    })
}

/// The k grid used for validation search: 10, 20, ..., 60.
pub const K_GRID: [usize; 6] = [10, 20, 30, 40, 50, 60];
