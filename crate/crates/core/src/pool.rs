//! Bounded pool of alphas combined by a linear model.
//!
//! Every member is cached as its per-day cross-sectional z-score over the
//! whole panel. Weights minimise the mean squared error between the weighted
//! sum and the (tradable-masked) forward returns over the training days; a
//! member's missing cells count as its cross-sectional mean, zero.

use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use rand::Rng;

use crate::expr::{evaluate, Expression};
use crate::matrix::AlphaMatrix;
use crate::panel::{compute_ic, Panel, PanelError};

#[derive(Clone, Debug, PartialEq)]
pub enum PoolError {
    /// No training cell has a valid target.
    DegenerateTarget,
    /// The alpha has no valid standardized cell on the training days.
    Evaluation,
    EmptyPool,
    Metric(PanelError),
}

impl fmt::Display for PoolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolError::DegenerateTarget => f.write_str("target has no valid training cell"),
            PoolError::Evaluation => f.write_str("alpha is missing on every training cell"),
            PoolError::EmptyPool => f.write_str("alpha pool is empty"),
            PoolError::Metric(e) => write!(f, "metric: {e}"),
        }
    }
}

impl core::error::Error for PoolError {}

impl From<PanelError> for PoolError {
    fn from(e: PanelError) -> Self {
        PoolError::Metric(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr: 0.01,
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Step size actually used: `lr` capped by the curvature bound.
    pub step: f64,
    /// Loss before the first step and after each step.
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub expr: Expression,
    /// Standardized alpha over the whole panel.
    pub cache: AlphaMatrix,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AddOutcome {
    /// Training-window IC of the composite after the full update.
    pub composite_ic: f64,
    pub evicted: Option<Expression>,
}

#[derive(Clone, Debug)]
pub struct AlphaPool {
    entries: Vec<PoolEntry>,
    capacity: usize,
    fit: FitConfig,
    target: AlphaMatrix,
    train: Range<usize>,
    /// Training cells with a valid target (stock-major flat indices).
    cells: Vec<usize>,
    /// Per entry: zero-filled cache values on `cells`.
    design: Vec<Vec<f64>>,
    /// Per entry: cache on the training days, day-major, missing kept.
    train_view: Vec<Vec<f64>>,
    /// `gram[i][j]` = mean over `cells` of `f_i * f_j`.
    gram: Vec<Vec<f64>>,
    /// `xty[i]` = mean over `cells` of `f_i * r`.
    xty: Vec<f64>,
    yty: f64,
}

/// Zero-filled cache values on the given cells.
fn cell_values(cache: &AlphaMatrix, cells: &[usize]) -> Vec<f64> {
    let v = cache.as_slice();
    cells
        .iter()
        .map(|&c| if v[c].is_nan() { 0.0 } else { v[c] })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `cache` restricted to `days`, laid out day by day.
fn day_major(cache: &AlphaMatrix, days: &Range<usize>) -> Vec<f64> {
    let mut out = Vec::with_capacity(days.len() * cache.n_stocks());
    for t in days.start..days.end.min(cache.n_days()) {
        for i in 0..cache.n_stocks() {
            out.push(cache.value(i, t));
        }
    }
    out
}

/// Mean over days of the Pearson correlation of two day-major blocks with
/// `n` stocks per day, on jointly valid cells; `None` if no day qualifies.
fn mean_daily_pearson(a: &[f64], b: &[f64], n: usize) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for (da, db) in a.chunks_exact(n).zip(b.chunks_exact(n)) {
        let (mut m, mut sa, mut sb) = (0usize, 0.0, 0.0);
        for (x, y) in da.iter().zip(db) {
            if !x.is_nan() && !y.is_nan() {
                m += 1;
                sa += x;
                sb += y;
            }
        }
        if m < 2 {
            continue;
        }
        let (ma, mb) = (sa / m as f64, sb / m as f64);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in da.iter().zip(db) {
            if !x.is_nan() && !y.is_nan() {
                let (dx, dy) = (x - ma, y - mb);
                sxy += dx * dy;
                sxx += dx * dx;
                syy += dy * dy;
            }
        }
        if !(sxx > 0.0 && syy > 0.0) {
            continue;
        }
        let r = sxy / (libm::sqrt(sxx) * libm::sqrt(syy));
        if r.is_finite() {
            sum += r.clamp(-1.0, 1.0);
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

impl AlphaPool {
    /// `target` is the full-panel forward-return matrix with untradable cells
    /// masked; only `train` days are used for fitting and rewards.
    pub fn new(
        capacity: usize,
        fit: FitConfig,
        target: AlphaMatrix,
        train: Range<usize>,
    ) -> Result<AlphaPool, PoolError> {
        let d = target.n_days();
        let mut cells = Vec::new();
        for i in 0..target.n_stocks() {
            for t in train.start..train.end.min(d) {
                if !target.is_missing(i, t) {
                    cells.push(i * d + t);
                }
            }
        }
        if cells.is_empty() {
            return Err(PoolError::DegenerateTarget);
        }
        let r: Vec<f64> = cells.iter().map(|&c| target.as_slice()[c]).collect();
        let yty = dot(&r, &r) / cells.len() as f64;
        Ok(AlphaPool {
            entries: Vec::new(),
            capacity: capacity.max(1),
            fit,
            target,
            train,
            cells,
            design: Vec::new(),
            train_view: Vec::new(),
            gram: Vec::new(),
            xty: Vec::new(),
            yty,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn train_range(&self) -> Range<usize> {
        self.train.clone()
    }

    pub fn target(&self) -> &AlphaMatrix {
        &self.target
    }

    pub fn fit_config(&self) -> &FitConfig {
        &self.fit
    }

    /// Standardizes a raw alpha the way pool caches are stored.
    pub fn standardize(raw: &AlphaMatrix) -> AlphaMatrix {
        raw.standardize_daily()
    }

    fn has_train_support(&self, cache: &AlphaMatrix) -> bool {
        let v = cache.as_slice();
        self.cells.iter().any(|&c| !v[c].is_nan())
    }

    fn push_entry(&mut self, entry: PoolEntry) {
        let x = cell_values(&entry.cache, &self.cells);
        let n = self.cells.len() as f64;
        let mut row: Vec<f64> = self.design.iter().map(|d| dot(d, &x) / n).collect();
        let diag = dot(&x, &x) / n;
        for (g, &v) in self.gram.iter_mut().zip(&row) {
            g.push(v);
        }
        row.push(diag);
        self.gram.push(row);
        let r: Vec<f64> = self.cells.iter().map(|&c| self.target.as_slice()[c]).collect();
        self.xty.push(dot(&x, &r) / n);
        self.design.push(x);
        self.train_view.push(day_major(&entry.cache, &self.train));
        self.entries.push(entry);
    }

    fn remove_entry(&mut self, index: usize) -> PoolEntry {
        self.gram.remove(index);
        for g in &mut self.gram {
            g.remove(index);
        }
        self.xty.remove(index);
        self.design.remove(index);
        self.train_view.remove(index);
        self.entries.remove(index)
    }

    /// Mean squared error of the composite with weights `w` on training cells.
    pub fn loss(&self, w: &[f64]) -> f64 {
        let gw: Vec<f64> = self.gram.iter().map(|row| dot(row, w)).collect();
        self.loss_from(w, &gw)
    }

    /// Loss given the product `gw = G w`.
    fn loss_from(&self, w: &[f64], gw: &[f64]) -> f64 {
        dot(w, gw) - 2.0 * dot(&self.xty, w) + self.yty
    }

    /// Gradient descent on the pool weights starting from the current ones.
    ///
    /// The step is `min(lr, 1 / bound)` where `bound` is the Gershgorin bound
    /// on the Gram matrix's largest eigenvalue, so the loss never increases.
    pub fn fit_weights(&mut self, cfg: &FitConfig) -> Result<FitReport, PoolError> {
        if self.entries.is_empty() {
            return Err(PoolError::EmptyPool);
        }
        let k = self.entries.len();
        let bound = self
            .gram
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let step = if bound > 0.0 { cfg.lr.min(1.0 / bound) } else { cfg.lr };
        let mut w = self.weights();
        let mut gw = alloc::vec![0.0; k];
        let mut losses = Vec::new();
        let mut iterations = 0;
        let grad_norm = loop {
            for (g, row) in gw.iter_mut().zip(&self.gram) {
                *g = dot(row, &w);
            }
            losses.push(self.loss_from(&w, &gw));
            // Gradient: 2 (G w - b).
            let mut norm2 = 0.0;
            for (g, b) in gw.iter_mut().zip(&self.xty) {
                *g = 2.0 * (*g - b);
                norm2 += *g * *g;
            }
            let norm = libm::sqrt(norm2);
            if norm < cfg.tol || iterations >= cfg.max_iters {
                break norm;
            }
            for (wi, gi) in w.iter_mut().zip(&gw) {
                *wi -= step * gi;
            }
            iterations += 1;
        };
        for (e, wi) in self.entries.iter_mut().zip(&w) {
            e.weight = *wi;
        }
        Ok(FitReport {
            iterations,
            loss: *losses.last().unwrap_or(&f64::NAN),
            grad_norm,
            step,
            losses,
        })
    }

    /// Evaluates `expr` on `panel` and adds it; see [`AlphaPool::add_standardized`].
    pub fn add_alpha<R: Rng + ?Sized>(
        &mut self,
        expr: Expression,
        panel: &Panel,
        rng: &mut R,
    ) -> Result<AddOutcome, PoolError> {
        let cache = evaluate(&expr, panel).standardize_daily();
        self.add_standardized(expr, cache, rng)
    }

    /// Appends an alpha with a small random weight, refits, evicts the entry
    /// with the smallest |weight| if the pool overflows (refitting once more)
    /// and returns the composite's training IC.
    pub fn add_standardized<R: Rng + ?Sized>(
        &mut self,
        expr: Expression,
        cache: AlphaMatrix,
        rng: &mut R,
    ) -> Result<AddOutcome, PoolError> {
        if !self.has_train_support(&cache) {
            return Err(PoolError::Evaluation);
        }
        let weight = rng.random_range(-0.1..=0.1);
        self.push_entry(PoolEntry {
            expr,
            cache,
            weight,
        });
        let fit = self.fit;
        self.fit_weights(&fit)?;
        let mut evicted = None;
        if self.entries.len() > self.capacity {
            let idx = self.least_principal().expect("non-empty pool");
            evicted = Some(self.remove_entry(idx).expr);
            self.fit_weights(&fit)?;
        }
        Ok(AddOutcome {
            composite_ic: self.train_ic()?,
            evicted,
        })
    }

    /// Index of the entry with the smallest |weight| (first on ties).
    pub fn least_principal(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let a = e.weight.abs();
            if best.map_or(true, |(_, b)| a < b) {
                best = Some((i, a));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Weighted sum of the caches on `days`, missing elsewhere. A cell is
    /// missing only when every member is.
    pub fn composite(&self, days: Range<usize>) -> Result<AlphaMatrix, PoolError> {
        if self.entries.is_empty() {
            return Err(PoolError::EmptyPool);
        }
        let (n, d) = (self.target.n_stocks(), self.target.n_days());
        let mut out = AlphaMatrix::missing(n, d);
        for i in 0..n {
            for t in days.start..days.end.min(d) {
                let mut acc = 0.0;
                let mut any = false;
                for e in &self.entries {
                    if let Some(v) = e.cache.get(i, t) {
                        acc += e.weight * v;
                        any = true;
                    }
                }
                if any {
                    out.set(i, t, acc);
                }
            }
        }
        Ok(out)
    }

    /// IC of the composite against the pool target on `days`.
    pub fn composite_ic(&self, days: Range<usize>) -> Result<f64, PoolError> {
        let c = self.composite(days.clone())?;
        Ok(compute_ic(&c, &self.target, days)?.ic)
    }

    pub fn train_ic(&self) -> Result<f64, PoolError> {
        self.composite_ic(self.train.clone())
    }

    /// Mutual IC of `candidate` with each member on the training days; members
    /// without overlap contribute nothing.
    pub fn mut_ics(&self, candidate: &AlphaMatrix) -> Vec<f64> {
        let c = day_major(candidate, &self.train);
        let n = candidate.n_stocks();
        self.train_view
            .iter()
            .filter_map(|v| mean_daily_pearson(&c, v, n))
            .collect()
    }

    /// Rebuilds a pool from saved expressions and weights without refitting.
    pub fn restore(
        capacity: usize,
        fit: FitConfig,
        target: AlphaMatrix,
        train: Range<usize>,
        members: &[(Expression, f64)],
        panel: &Panel,
    ) -> Result<AlphaPool, PoolError> {
        let mut pool = AlphaPool::new(capacity, fit, target, train)?;
        for (expr, w) in members {
            let cache = evaluate(expr, panel).standardize_daily();
            pool.push_entry(PoolEntry {
                expr: expr.clone(),
                cache,
                weight: *w,
            });
        }
        Ok(pool)
    }
}
