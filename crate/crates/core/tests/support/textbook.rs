//! Textbook formulas and fixtures used as oracles.

use alphamine_core::expr::Feature;
use alphamine_core::panel::civil_date;
use alphamine_core::{AlphaMatrix, Panel};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tree::{Data, Grid};

/// Pearson correlation by the raw-sum formula.
pub fn pearson_sums(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Spearman correlation of tie-free samples: `1 - 6 sum d^2 / (n (n^2 - 1))`.
pub fn spearman_no_ties(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64], i: usize| v.iter().filter(|&&w| w < v[i]).count() as f64 + 1.0;
    let n = x.len() as f64;
    let d2: f64 = (0..x.len()).map(|i| (rank(x, i) - rank(y, i)).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Jointly valid cells of day `t`.
pub fn joint(a: &AlphaMatrix, b: &AlphaMatrix, t: usize) -> (Vec<f64>, Vec<f64>) {
    (0..a.n_stocks())
        .filter(|&i| !a.is_missing(i, t) && !b.is_missing(i, t))
        .map(|i| (a.value(i, t), b.value(i, t)))
        .unzip()
}

/// Mean and `mean / sample std` of a series.
pub fn mean_ir(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, m / sd)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Least-squares weights of `target` on `columns` over the cells where the
/// target is valid, missing column cells read as 0.
pub fn normal_equations(columns: &[&AlphaMatrix], target: &AlphaMatrix) -> Vec<f64> {
    let k = columns.len();
    let y = target.as_slice();
    let cells: Vec<usize> = (0..y.len()).filter(|&c| !y[c].is_nan()).collect();
    let val = |m: &AlphaMatrix, c: usize| {
        let v = m.as_slice()[c];
        if v.is_nan() {
            0.0
        } else {
            v
        }
    };
    let mut g = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for &c in &cells {
        for i in 0..k {
            b[i] += val(columns[i], c) * y[c];
            for j in 0..k {
                g[i][j] += val(columns[i], c) * val(columns[j], c);
            }
        }
    }
    solve(g, b)
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn noise_matrix<R: Rng>(rng: &mut R, n: usize, d: usize, missing: f64) -> AlphaMatrix {
    AlphaMatrix::from_fn(n, d, |_, _| {
        if rng.random_bool(missing) {
            f64::NAN
        } else {
            gaussian(rng)
        }
    })
}

/// A random panel with O(1) prices, suspensions, untradable days and a
/// stretch of constant volume, plus the same data as oracle grids.
pub fn random_panel<R: Rng>(rng: &mut R, n: usize, d: usize) -> (Panel, Data) {
    let mut f: Vec<Grid> = vec![vec![vec![0.0; d]; n]; 6];
    let mut tradable = vec![vec![true; d]; n];
    for i in 0..n {
        let mut close: f64 = rng.random_range(0.5..2.0);
        for t in 0..d {
            let open = close * (1.0 + 0.01 * gaussian(rng));
            close *= (0.02 * gaussian(rng)).exp();
            let hi = open.max(close) * (1.0 + 0.005 * gaussian(rng).abs());
            let lo = open.min(close) * (1.0 - 0.005 * gaussian(rng).abs());
            let vwap = lo + (hi - lo) * rng.random_range(0.2..0.8);
            let volume = if i == 0 && t < d / 2 { 1.25 } else { rng.random_range(0.5..2.0) };
            let row = [open, hi, lo, close, volume, vwap];
            let suspended = rng.random_bool(0.02);
            for (k, v) in row.iter().enumerate() {
                f[k][i][t] = if suspended { f64::NAN } else { *v };
            }
            tradable[i][t] = !suspended && !rng.random_bool(0.03);
        }
    }
    let features: Vec<AlphaMatrix> = Feature::ALL
        .iter()
        .map(|&feat| AlphaMatrix::from_fn(n, d, |i, t| f[feat.index()][i][t]))
        .collect();
    let panel = Panel::new(
        (0..n).map(|i| format!("S{i:03}")).collect(),
        (0..d).map(|t| civil_date(18000 + t as i64)).collect(),
        features,
        tradable.iter().flat_map(|r| r.iter().copied()).collect(),
    )
    .expect("valid random panel");
    (
        panel,
        Data {
            features: f,
            tradable,
        },
    )
}

/// Panel whose every price column is `close` (NaN for missing).
pub fn close_only_panel(close: &[Vec<f64>], tradable: &[Vec<bool>]) -> Panel {
    let (n, d) = (close.len(), close[0].len());
    let c = AlphaMatrix::from_fn(n, d, |i, t| close[i][t]);
    let vol = AlphaMatrix::filled(n, d, 1.0);
    let features = Feature::ALL
        .iter()
        .map(|&f| if f == Feature::Volume { vol.clone() } else { c.clone() })
        .collect();
    Panel::new(
        (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect(),
        (0..d).map(|t| civil_date(18000 + t as i64)).collect(),
        features,
        tradable.iter().flat_map(|r| r.iter().copied()).collect(),
    )
    .expect("valid panel")
}
