//! Stock panels, forward-return targets, date splits and signal metrics.

mod metrics;
mod synth;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::expr::Feature;
use crate::matrix::AlphaMatrix;

pub use metrics::{compute_ic, compute_mut_ic, pearson, rank_average, DailyMetric, MetricReport};
pub use synth::{civil_date, synth_panel, Planted};

#[derive(Clone, Debug, PartialEq)]
pub enum PanelError {
    /// Degenerate sizes or arguments.
    Argument(String),
    /// Inconsistent data: duplicate keys, non-increasing dates, bad shapes.
    Data(String),
    /// No day has two jointly valid cells.
    EmptyOverlap,
}

impl fmt::Display for PanelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PanelError::Argument(m) => write!(f, "invalid argument: {m}"),
            PanelError::Data(m) => write!(f, "invalid data: {m}"),
            PanelError::EmptyOverlap => f.write_str("no day has two jointly valid cells"),
        }
    }
}

impl core::error::Error for PanelError {}

/// Forward-return horizon used as the mining target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Horizon {
    #[default]
    Days5,
    Days10,
}

impl Horizon {
    pub fn days(self) -> usize {
        match self {
            Horizon::Days5 => 5,
            Horizon::Days10 => 10,
        }
    }

    pub fn from_days(days: usize) -> Option<Horizon> {
        match days {
            5 => Some(Horizon::Days5),
            10 => Some(Horizon::Days10),
            _ => None,
        }
    }
}

/// Daily stock data on a dense (stock, day) grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    symbols: Vec<String>,
    dates: Vec<String>,
    features: Vec<AlphaMatrix>,
    tradable: Vec<bool>,
    returns5: AlphaMatrix,
    returns10: AlphaMatrix,
}

impl Panel {
    /// `features` holds one matrix per [`Feature`] in `Feature::ALL` order;
    /// `tradable` is stock-major like the matrices. Dates must be ISO
    /// (`YYYY-MM-DD`) strings in strictly increasing order.
    pub fn new(
        symbols: Vec<String>,
        dates: Vec<String>,
        features: Vec<AlphaMatrix>,
        tradable: Vec<bool>,
    ) -> Result<Panel, PanelError> {
        let (n, d) = (symbols.len(), dates.len());
        if n == 0 || d == 0 {
            return Err(PanelError::Argument("panel needs at least one stock and one day".into()));
        }
        if features.len() != Feature::ALL.len() {
            return Err(PanelError::Data(alloc::format!(
                "expected {} feature matrices, got {}",
                Feature::ALL.len(),
                features.len()
            )));
        }
        if features.iter().any(|m| m.n_stocks() != n || m.n_days() != d) || tradable.len() != n * d
        {
            return Err(PanelError::Data("feature or tradable shape mismatch".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(PanelError::Data(alloc::format!(
                "dates not strictly increasing: {} then {}",
                w[0],
                w[1]
            )));
        }
        let mut sorted: Vec<&String> = symbols.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(PanelError::Data(alloc::format!("duplicate symbol {}", w[0])));
        }
        let close = &features[Feature::Close.index()];
        let returns5 = forward_returns(close, 5);
        let returns10 = forward_returns(close, 10);
        Ok(Panel {
            symbols,
            dates,
            features,
            tradable,
            returns5,
            returns10,
        })
    }

    pub fn n_stocks(&self) -> usize {
        self.symbols.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn feature(&self, f: Feature) -> &AlphaMatrix {
        &self.features[f.index()]
    }

    #[inline]
    pub fn is_tradable(&self, stock: usize, day: usize) -> bool {
        self.tradable[stock * self.dates.len() + day]
    }

    pub fn tradable_mask(&self) -> &[bool] {
        &self.tradable
    }

    /// `close[t + h] / close[t] - 1`, missing where either close is.
    pub fn forward_returns(&self, horizon: Horizon) -> &AlphaMatrix {
        match horizon {
            Horizon::Days5 => &self.returns5,
            Horizon::Days10 => &self.returns10,
        }
    }

    /// Forward returns with non-tradable cells masked out; the target every
    /// metric and the pool fit against.
    pub fn target(&self, horizon: Horizon) -> AlphaMatrix {
        let r = self.forward_returns(horizon);
        AlphaMatrix::from_fn(self.n_stocks(), self.n_days(), |i, t| {
            if self.is_tradable(i, t) {
                r.value(i, t)
            } else {
                f64::NAN
            }
        })
    }

    /// Index of the first date `>= date`.
    pub fn day_at_or_after(&self, date: &str) -> usize {
        self.dates.partition_point(|d| d.as_str() < date)
    }

    /// Half-open day range covering dates in `[from, to]` (inclusive bounds).
    pub fn day_range(&self, from: &str, to: &str) -> Range<usize> {
        let start = self.day_at_or_after(from);
        let end = self.dates.partition_point(|d| d.as_str() <= to);
        start..end.max(start)
    }
}

/// Simple forward returns off a close matrix.
pub fn forward_returns(close: &AlphaMatrix, horizon: usize) -> AlphaMatrix {
    let (n, d) = (close.n_stocks(), close.n_days());
    AlphaMatrix::from_fn(n, d, |i, t| {
        if t + horizon >= d {
            return f64::NAN;
        }
        close.value(i, t + horizon) / close.value(i, t) - 1.0
    })
}

/// Disjoint, ordered train / validation / test day ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl SplitSpec {
    pub fn new(
        train: Range<usize>,
        valid: Range<usize>,
        test: Range<usize>,
    ) -> Result<SplitSpec, PanelError> {
        let s = SplitSpec { train, valid, test };
        for (name, r) in [("train", &s.train), ("valid", &s.valid), ("test", &s.test)] {
            if r.start >= r.end {
                return Err(PanelError::Argument(alloc::format!("{name} split is empty")));
            }
        }
        if s.train.end > s.valid.start || s.valid.end > s.test.start {
            return Err(PanelError::Argument(
                "splits must be disjoint and ordered train < valid < test".into(),
            ));
        }
        Ok(s)
    }

    /// Consecutive splits by fraction of days; the test split takes the rest.
    pub fn by_fraction(n_days: usize, train: f64, valid: f64) -> Result<SplitSpec, PanelError> {
        if !(train > 0.0 && valid > 0.0 && train + valid < 1.0) {
            return Err(PanelError::Argument(alloc::format!(
                "fractions must be positive and sum below 1 (got {train}, {valid})"
            )));
        }
        let a = (n_days as f64 * train) as usize;
        let b = (n_days as f64 * (train + valid)) as usize;
        SplitSpec::new(0..a, a..b, b..n_days)
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Valid => self.valid.clone(),
            Split::Test => self.test.clone(),
        }
    }
}
