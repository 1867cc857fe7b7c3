use alloc::vec;
use alloc::vec::Vec;

/// A stocks × days matrix of alpha (or return) values.
///
/// Missing cells are stored as NaN; every constructor and operator in this
/// crate maps non-finite results to NaN so `is_missing` is the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatrix {
    n_stocks: usize,
    n_days: usize,
    values: Vec<f64>,
}

impl AlphaMatrix {
    pub fn missing(n_stocks: usize, n_days: usize) -> AlphaMatrix {
        AlphaMatrix {
            n_stocks,
            n_days,
            values: vec![f64::NAN; n_stocks * n_days],
        }
    }

    pub fn filled(n_stocks: usize, n_days: usize, value: f64) -> AlphaMatrix {
        let mut m = AlphaMatrix {
            n_stocks,
            n_days,
            values: vec![value; n_stocks * n_days],
        };
        m.sanitize();
        m
    }

    /// Row-major (stock-major) values; non-finite entries become missing.
    pub fn from_vec(n_stocks: usize, n_days: usize, values: Vec<f64>) -> AlphaMatrix {
        assert_eq!(values.len(), n_stocks * n_days, "matrix shape mismatch");
        let mut m = AlphaMatrix {
            n_stocks,
            n_days,
            values,
        };
        m.sanitize();
        m
    }

    pub fn from_fn(n_stocks: usize, n_days: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_stocks * n_days);
        for i in 0..n_stocks {
            for t in 0..n_days {
                values.push(f(i, t));
            }
        }
        AlphaMatrix::from_vec(n_stocks, n_days, values)
    }

    fn sanitize(&mut self) {
        for v in &mut self.values {
            if !v.is_finite() {
                *v = f64::NAN;
            }
        }
    }

    pub fn n_stocks(&self) -> usize {
        self.n_stocks
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn same_shape(&self, other: &AlphaMatrix) -> bool {
        self.n_stocks == other.n_stocks && self.n_days == other.n_days
    }

    /// Raw cell value; NaN when missing.
    #[inline]
    pub fn value(&self, stock: usize, day: usize) -> f64 {
        self.values[stock * self.n_days + day]
    }

    #[inline]
    pub fn get(&self, stock: usize, day: usize) -> Option<f64> {
        let v = self.value(stock, day);
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    #[inline]
    pub fn is_missing(&self, stock: usize, day: usize) -> bool {
        self.value(stock, day).is_nan()
    }

    /// Stores `value`, mapping non-finite numbers to missing.
    #[inline]
    pub fn set(&mut self, stock: usize, day: usize, value: f64) {
        self.values[stock * self.n_days + day] = if value.is_finite() { value } else { f64::NAN };
    }

    pub fn row(&self, stock: usize) -> &[f64] {
        &self.values[stock * self.n_days..(stock + 1) * self.n_days]
    }

    pub fn row_mut(&mut self, stock: usize) -> &mut [f64] {
        let n = self.n_days;
        &mut self.values[stock * n..(stock + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn count_valid(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn all_missing(&self) -> bool {
        self.values.iter().all(|v| v.is_nan())
    }

    /// Cell-wise map; missing stays missing.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> AlphaMatrix {
        let values = self
            .values
            .iter()
            .map(|&v| if v.is_nan() { f64::NAN } else { f(v) })
            .collect();
        AlphaMatrix::from_vec(self.n_stocks, self.n_days, values)
    }

    /// Cell-wise combination; missing if either side is missing.
    pub fn zip_map(&self, other: &AlphaMatrix, mut f: impl FnMut(f64, f64) -> f64) -> AlphaMatrix {
        assert!(self.same_shape(other), "matrix shape mismatch");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| if a.is_nan() || b.is_nan() { f64::NAN } else { f(a, b) })
            .collect();
        AlphaMatrix::from_vec(self.n_stocks, self.n_days, values)
    }

    /// Copy with every day outside `days` set missing.
    pub fn restrict_days(&self, days: core::ops::Range<usize>) -> AlphaMatrix {
        let mut out = self.clone();
        for i in 0..self.n_stocks {
            for (t, v) in out.row_mut(i).iter_mut().enumerate() {
                if !days.contains(&t) {
                    *v = f64::NAN;
                }
            }
        }
        out
    }

    /// Per-day cross-sectional z-score over valid cells. Days with fewer than
    /// two valid cells or zero dispersion become entirely missing.
    pub fn standardize_daily(&self) -> AlphaMatrix {
        let mut out = self.clone();
        let mut col = Vec::with_capacity(self.n_stocks);
        for t in 0..self.n_days {
            col.clear();
            col.extend((0..self.n_stocks).filter_map(|i| self.get(i, t)));
            let n = col.len();
            let mut ok = n >= 2;
            let (mut mean, mut sd) = (0.0, 0.0);
            if ok {
                mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                sd = libm::sqrt(var);
                let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                ok = sd > 1e-10 * scale && sd > 0.0;
            }
            for i in 0..self.n_stocks {
                let v = self.value(i, t);
                let z = if ok && !v.is_nan() { (v - mean) / sd } else { f64::NAN };
                out.set(i, t, z);
            }
        }
        out
    }
}
