use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Panel, PanelError};
use crate::expr::{evaluate, Expression, Feature};
use crate::matrix::AlphaMatrix;

/// An alpha baked into a synthetic panel's 5-day forward returns.
#[derive(Clone, Debug, PartialEq)]
pub struct Planted {
    pub expr: Expression,
    /// Signal share in `(0, 1]`: the target is
    /// `w * zscore(alpha) + sqrt(1 - w^2) * noise`, scaled.
    pub weight: f64,
}

const PLANT_HORIZON: usize = 5;
const PLANT_SCALE: f64 = 0.03;
/// 2015-01-05, a Monday.
const FIRST_DAY: i64 = 16440;

/// ISO date for a count of days since 1970-01-01 (proleptic Gregorian).
pub fn civil_date(days: i64) -> String {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}")
}

fn business_days(n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut day = FIRST_DAY;
    while out.len() < n {
        // 1970-01-01 was a Thursday; weekday 0 = Monday.
        let weekday = (day + 3).rem_euclid(7);
        if weekday < 5 {
            out.push(civil_date(day));
        }
        day += 1;
    }
    out
}

struct Grid {
    n: usize,
    d: usize,
    cols: [Vec<f64>; 6],
}

impl Grid {
    fn set_day(&mut self, i: usize, t: usize, prev_close: f64, close: f64, rng: &mut ChaCha8Rng) {
        let gap: f64 = rng.sample::<f64, _>(StandardNormal) * 0.004;
        let open = prev_close * libm::exp(gap);
        let hi_ext = libm::fabs(rng.sample::<f64, _>(StandardNormal)) * 0.006;
        let lo_ext = libm::fabs(rng.sample::<f64, _>(StandardNormal)) * 0.006;
        let high = open.max(close) * (1.0 + hi_ext);
        let low = open.min(close) * (1.0 - lo_ext);
        let volume = libm::exp(13.0 + 0.4 * rng.sample::<f64, _>(StandardNormal));
        let vwap = (high + low + close) / 3.0;
        let k = i * self.d + t;
        for (f, v) in [
            (Feature::Open, open),
            (Feature::High, high),
            (Feature::Low, low),
            (Feature::Close, close),
            (Feature::Volume, volume),
            (Feature::Vwap, vwap),
        ] {
            self.cols[f.index()][k] = v;
        }
    }

    fn close(&self, i: usize, t: usize) -> f64 {
        self.cols[Feature::Close.index()][i * self.d + t]
    }

    /// Panel over the first `days` days.
    fn prefix_panel(&self, symbols: &[String], dates: &[String], days: usize) -> Panel {
        let features = self
            .cols
            .iter()
            .map(|col| {
                AlphaMatrix::from_fn(self.n, days, |i, t| col[i * self.d + t])
            })
            .collect();
        Panel::new(
            symbols.to_vec(),
            dates[..days].to_vec(),
            features,
            vec![true; self.n * days],
        )
        .expect("synthetic grid is well formed")
    }
}

/// Deterministic synthetic panel of geometric random walks.
///
/// With `planted`, each close is generated five days after the alpha value
/// that predicts it, so `returns5[i][t]` equals the scaled mix of the
/// planted alpha's cross-sectional z-score at `t` and fresh noise. Cells where
/// the alpha is still warming up get pure noise.
pub fn synth_panel(
    n_stocks: usize,
    n_days: usize,
    seed: u64,
    planted: Option<&Planted>,
) -> Result<Panel, PanelError> {
    if n_stocks < 2 || n_days < 70 {
        return Err(PanelError::Argument(format!(
            "synthetic panel needs >= 2 stocks and >= 70 days (got {n_stocks} x {n_days})"
        )));
    }
    if let Some(p) = planted {
        if !(p.weight > 0.0 && p.weight <= 1.0) {
            return Err(PanelError::Argument(format!(
                "planted weight must be in (0, 1], got {}",
                p.weight
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols: Vec<String> = (0..n_stocks).map(|i| format!("S{i:03}")).collect();
    let dates = business_days(n_days);
    let vol: Vec<f64> = (0..n_stocks).map(|_| rng.random_range(0.01..0.03)).collect();
    let start: Vec<f64> = (0..n_stocks).map(|_| libm::exp(rng.random_range(1.0..4.5))).collect();

    let mut grid = Grid {
        n: n_stocks,
        d: n_days,
        cols: core::array::from_fn(|_| vec![f64::NAN; n_stocks * n_days]),
    };
    for (i, &c0) in start.iter().enumerate() {
        grid.set_day(i, 0, c0, c0, &mut rng);
    }

    for t in 1..n_days {
        let signal = match planted {
            Some(p) if t >= PLANT_HORIZON => planted_signal(&grid, &symbols, &dates, p, t - PLANT_HORIZON),
            _ => None,
        };
        for i in 0..n_stocks {
            let eps: f64 = rng.sample(StandardNormal);
            let close = match &signal {
                Some(z) => {
                    let base = grid.close(i, t - PLANT_HORIZON);
                    let w = planted.map(|p| p.weight).unwrap_or(0.0);
                    let r = match z[i] {
                        Some(zi) => PLANT_SCALE * (w * zi + libm::sqrt(1.0 - w * w) * eps),
                        None => PLANT_SCALE * eps,
                    };
                    base * (1.0 + r.max(-0.5))
                }
                None if planted.is_some() && t >= PLANT_HORIZON => {
                    let base = grid.close(i, t - PLANT_HORIZON);
                    base * (1.0 + (PLANT_SCALE * eps).max(-0.5))
                }
                None => grid.close(i, t - 1) * libm::exp(vol[i] * eps),
            };
            let prev = grid.close(i, t - 1);
            grid.set_day(i, t, prev, close, &mut rng);
        }
    }
    Ok(grid.prefix_panel(&symbols, &dates, n_days))
}

/// Cross-sectional z-scores of the planted alpha on `day`, if at least two
/// stocks have a value.
fn planted_signal(
    grid: &Grid,
    symbols: &[String],
    dates: &[String],
    planted: &Planted,
    day: usize,
) -> Option<Vec<Option<f64>>> {
    let prefix = grid.prefix_panel(symbols, dates, day + 1);
    let alpha = evaluate(&planted.expr, &prefix);
    let vals: Vec<Option<f64>> = (0..grid.n).map(|i| alpha.get(i, day)).collect();
    let valid: Vec<f64> = vals.iter().flatten().copied().collect();
    if valid.len() < 2 {
        return None;
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let var = valid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / valid.len() as f64;
    let sd = libm::sqrt(var);
    if !(sd > 0.0) {
        return None;
    }
    Some(vals.iter().map(|v| v.map(|x| (x - mean) / sd)).collect())
}
