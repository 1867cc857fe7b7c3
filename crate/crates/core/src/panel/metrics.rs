use alloc::vec::Vec;
use core::ops::Range;

use super::PanelError;
use crate::matrix::AlphaMatrix;

/// Pearson correlation; `None` for fewer than two points or a flat side.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    let r = sxy / (libm::sqrt(sxx) * libm::sqrt(syy));
    r.is_finite().then(|| r.clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn rank_average(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DailyMetric {
    pub day: usize,
    pub ic: f64,
    pub rank_ic: f64,
}

/// Time-aggregated daily cross-sectional correlations.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// Mean of the daily Pearson correlations.
    pub ic: f64,
    /// `ic` over the sample standard deviation of the daily values; NaN when
    /// that deviation is zero or fewer than two days qualify.
    pub icir: f64,
    /// Mean of the daily Spearman correlations.
    pub rank_ic: f64,
    pub rank_icir: f64,
    pub per_day: Vec<DailyMetric>,
}

fn mean_and_ir(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = libm::sqrt(var);
    (mean, if sd > 0.0 { mean / sd } else { f64::NAN })
}

fn joint_column(a: &AlphaMatrix, b: &AlphaMatrix, t: usize, xs: &mut Vec<f64>, ys: &mut Vec<f64>) {
    xs.clear();
    ys.clear();
    for i in 0..a.n_stocks() {
        let (x, y) = (a.value(i, t), b.value(i, t));
        if !x.is_nan() && !y.is_nan() {
            xs.push(x);
            ys.push(y);
        }
    }
}

/// Daily IC and RankIC of `alpha` against `target` over `days`.
///
/// Each day uses the cells where both matrices are valid; pass a target with
/// non-tradable cells masked (see `Panel::target`) to exclude them. Days with
/// fewer than two such cells, or with a flat side, are skipped.
pub fn compute_ic(
    alpha: &AlphaMatrix,
    target: &AlphaMatrix,
    days: Range<usize>,
) -> Result<MetricReport, PanelError> {
    assert!(alpha.same_shape(target), "alpha/target shape mismatch");
    let mut per_day = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for t in days.start..days.end.min(alpha.n_days()) {
        joint_column(alpha, target, t, &mut xs, &mut ys);
        let Some(ic) = pearson(&xs, &ys) else { continue };
        let rank_ic = pearson(&rank_average(&xs), &rank_average(&ys)).unwrap_or(0.0);
        per_day.push(DailyMetric { day: t, ic, rank_ic });
    }
    if per_day.is_empty() {
        return Err(PanelError::EmptyOverlap);
    }
    let ics: Vec<f64> = per_day.iter().map(|d| d.ic).collect();
    let rics: Vec<f64> = per_day.iter().map(|d| d.rank_ic).collect();
    let (ic, icir) = mean_and_ir(&ics);
    let (rank_ic, rank_icir) = mean_and_ir(&rics);
    Ok(MetricReport {
        ic,
        icir,
        rank_ic,
        rank_icir,
        per_day,
    })
}

/// Mean daily cross-sectional Pearson correlation between two alphas.
pub fn compute_mut_ic(a: &AlphaMatrix, b: &AlphaMatrix, days: Range<usize>) -> Result<f64, PanelError> {
    assert!(a.same_shape(b), "alpha shape mismatch");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut sum, mut count) = (0.0, 0usize);
    for t in days.start..days.end.min(a.n_days()) {
        joint_column(a, b, t, &mut xs, &mut ys);
        if let Some(r) = pearson(&xs, &ys) {
            sum += r;
            count += 1;
        }
    }
    if count == 0 {
        return Err(PanelError::EmptyOverlap);
    }
    Ok(sum / count as f64)
}
