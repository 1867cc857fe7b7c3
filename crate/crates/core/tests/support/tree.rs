//! Independent expression oracle: random expression trees rendered as text
//! and interpreted recursively on plain `Vec<Vec<f64>>` grids.

use rand::Rng;

pub const FEATURES: [&str; 6] = ["open", "high", "low", "close", "volume", "vwap"];
pub const DELTAS: [usize; 7] = [1, 5, 10, 20, 30, 40, 50];
pub const CONSTANTS: [f64; 13] = [
    -30.0, -10.0, -5.0, -2.0, -1.0, -0.5, -0.01, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0,
];
const UNARY: [&str; 4] = ["Sign", "Abs", "Log", "CSRank"];
const BINARY: [&str; 6] = ["Add", "Sub", "Mul", "Div", "Greater", "Less"];
const TS_UNARY: [&str; 13] = [
    "Ref", "Rank", "Skew", "Kurt", "Mean", "Med", "Sum", "Std", "Var", "Max", "Min", "WMA", "EMA",
];
const TS_BINARY: [&str; 2] = ["Cov", "Corr"];

/// `grid[stock][day]`, NaN for missing.
pub type Grid = Vec<Vec<f64>>;

#[derive(Clone, Debug)]
pub enum Tree {
    Feature(usize),
    Unary(&'static str, Box<Tree>),
    /// Operands; a constant side is stored as `Err(c)`.
    Binary(&'static str, Result<Box<Tree>, f64>, Result<Box<Tree>, f64>),
    TsUnary(&'static str, Box<Tree>, usize),
    TsBinary(&'static str, Box<Tree>, Box<Tree>, usize),
}

impl Tree {
    /// Number of RPN tokens.
    pub fn len(&self) -> usize {
        let side = |s: &Result<Box<Tree>, f64>| s.as_ref().map_or(1, |t| t.len());
        match self {
            Tree::Feature(_) => 1,
            Tree::Unary(_, x) => 1 + x.len(),
            Tree::Binary(_, a, b) => 1 + side(a) + side(b),
            Tree::TsUnary(_, x, _) => 2 + x.len(),
            Tree::TsBinary(_, x, y, _) => 2 + x.len() + y.len(),
        }
    }

    pub fn text(&self) -> String {
        let side = |s: &Result<Box<Tree>, f64>| match s {
            Ok(t) => t.text(),
            Err(c) => format!("{c:?}"),
        };
        match self {
            Tree::Feature(f) => FEATURES[*f].to_string(),
            Tree::Unary(op, x) => format!("{op}({})", x.text()),
            Tree::Binary(op, a, b) => format!("{op}({}, {})", side(a), side(b)),
            Tree::TsUnary(op, x, d) => format!("{op}({}, {d})", x.text()),
            Tree::TsBinary(op, x, y, d) => format!("{op}({}, {}, {d})", x.text(), y.text()),
        }
    }
}

/// A random series-valued tree of at most `budget` tokens (`budget >= 1`).
pub fn random_tree<R: Rng>(rng: &mut R, budget: usize, depth: usize) -> Tree {
    let leaf = budget < 2 || depth > 6 || rng.random_bool(0.25);
    if leaf {
        return Tree::Feature(rng.random_range(0..FEATURES.len()));
    }
    let pick = rng.random_range(0..4);
    match pick {
        0 => Tree::Unary(
            UNARY[rng.random_range(0..UNARY.len())],
            Box::new(random_tree(rng, budget - 1, depth + 1)),
        ),
        1 if budget >= 3 => {
            let op = BINARY[rng.random_range(0..BINARY.len())];
            let constant = rng.random_range(0..3);
            let c = CONSTANTS[rng.random_range(0..CONSTANTS.len())];
            match constant {
                0 => {
                    let a = random_tree(rng, budget - 2, depth + 1);
                    Tree::Binary(op, Ok(Box::new(a)), Err(c))
                }
                1 => {
                    let b = random_tree(rng, budget - 2, depth + 1);
                    Tree::Binary(op, Err(c), Ok(Box::new(b)))
                }
                _ => {
                    let a = random_tree(rng, (budget - 1) / 2, depth + 1);
                    let b = random_tree(rng, budget - 1 - a.len(), depth + 1);
                    Tree::Binary(op, Ok(Box::new(a)), Ok(Box::new(b)))
                }
            }
        }
        2 if budget >= 3 => Tree::TsUnary(
            TS_UNARY[rng.random_range(0..TS_UNARY.len())],
            Box::new(random_tree(rng, budget - 2, depth + 1)),
            DELTAS[rng.random_range(0..DELTAS.len())],
        ),
        3 if budget >= 4 => {
            let x = random_tree(rng, (budget - 2) / 2, depth + 1);
            let y = random_tree(rng, budget - 2 - x.len(), depth + 1);
            Tree::TsBinary(
                TS_BINARY[rng.random_range(0..TS_BINARY.len())],
                Box::new(x),
                Box::new(y),
                DELTAS[rng.random_range(0..DELTAS.len())],
            )
        }
        _ => Tree::Unary(
            UNARY[rng.random_range(0..UNARY.len())],
            Box::new(random_tree(rng, budget - 1, depth + 1)),
        ),
    }
}

/// Inputs of the interpreter: six feature grids and the tradable mask.
pub struct Data {
    pub features: Vec<Grid>,
    pub tradable: Vec<Vec<bool>>,
}

fn clean(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

fn map(x: &Grid, f: impl Fn(f64) -> f64) -> Grid {
    x.iter()
        .map(|row| row.iter().map(|&v| if v.is_nan() { v } else { clean(f(v)) }).collect())
        .collect()
}

fn spread_is_zero(m2: f64, window: &[f64]) -> bool {
    let scale = window.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    !(m2.sqrt() > 1e-10 * scale)
}

pub fn eval(tree: &Tree, data: &Data) -> Grid {
    match tree {
        Tree::Feature(f) => data.features[*f].clone(),
        Tree::Unary(op, x) => {
            let x = eval(x, data);
            match *op {
                "Sign" => map(&x, |v| if v > 0.0 { 1.0 } else { 0.0 }),
                "Abs" => map(&x, f64::abs),
                "Log" => map(&x, |v| if v > 0.0 { v.ln() } else { f64::NAN }),
                "CSRank" => cs_rank(&x, &data.tradable),
                _ => unreachable!(),
            }
        }
        Tree::Binary(op, a, b) => {
            let side = |s: &Result<Box<Tree>, f64>| match s {
                Ok(t) => eval(t, data),
                Err(c) => vec![vec![*c; data.features[0][0].len()]; data.features[0].len()],
            };
            let (a, b) = (side(a), side(b));
            let f = |p: f64, q: f64| match *op {
                "Add" => p + q,
                "Sub" => p - q,
                "Mul" => p * q,
                "Div" => {
                    if q == 0.0 {
                        f64::NAN
                    } else {
                        p / q
                    }
                }
                "Greater" => (p > q) as u8 as f64,
                "Less" => (p < q) as u8 as f64,
                _ => unreachable!(),
            };
            a.iter()
                .zip(&b)
                .map(|(ra, rb)| {
                    ra.iter()
                        .zip(rb)
                        .map(|(&p, &q)| if p.is_nan() || q.is_nan() { f64::NAN } else { clean(f(p, q)) })
                        .collect()
                })
                .collect()
        }
        Tree::TsUnary(op, x, d) => {
            let x = eval(x, data);
            x.iter()
                .map(|row| {
                    (0..row.len())
                        .map(|t| {
                            if *op == "Ref" {
                                return if t >= *d { row[t - d] } else { f64::NAN };
                            }
                            if t + 1 < *d {
                                return f64::NAN;
                            }
                            let w = &row[t + 1 - d..=t];
                            if w.iter().any(|v| v.is_nan()) {
                                return f64::NAN;
                            }
                            clean(window(op, w))
                        })
                        .collect()
                })
                .collect()
        }
        Tree::TsBinary(op, x, y, d) => {
            let (x, y) = (eval(x, data), eval(y, data));
            x.iter()
                .zip(&y)
                .map(|(rx, ry)| {
                    (0..rx.len())
                        .map(|t| {
                            if *d < 2 || t + 1 < *d {
                                return f64::NAN;
                            }
                            let (wx, wy) = (&rx[t + 1 - d..=t], &ry[t + 1 - d..=t]);
                            if wx.iter().chain(wy).any(|v| v.is_nan()) {
                                return f64::NAN;
                            }
                            clean(pair_window(op, wx, wy))
                        })
                        .collect()
                })
                .collect()
        }
    }
}

fn mean(w: &[f64]) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}

fn window(op: &str, w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let m = mean(w);
    let moment = |k: i32| w.iter().map(|v| (v - m).powi(k)).sum::<f64>() / n;
    match op {
        "Rank" => {
            let today = w[w.len() - 1];
            let below = w.iter().filter(|&&v| v < today).count() as f64;
            let ties = w.iter().filter(|&&v| v == today).count() as f64;
            // Average of the 1-based positions below+1 ..= below+ties.
            (below + (ties + 1.0) / 2.0) / n
        }
        "Skew" => {
            let m2 = moment(2);
            if spread_is_zero(m2, w) {
                return f64::NAN;
            }
            moment(3) / (m2 * m2.sqrt())
        }
        "Kurt" => {
            let m2 = moment(2);
            if spread_is_zero(m2, w) {
                return f64::NAN;
            }
            moment(4) / (m2 * m2) - 3.0
        }
        "Mean" => m,
        "Med" => {
            let mut s = w.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = s.len();
            if k % 2 == 1 {
                s[k / 2]
            } else {
                0.5 * (s[k / 2 - 1] + s[k / 2])
            }
        }
        "Sum" => w.iter().sum(),
        "Std" | "Var" => {
            if w.len() < 2 {
                return f64::NAN;
            }
            let var = w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            if op == "Std" {
                var.sqrt()
            } else {
                var
            }
        }
        "Max" => w.iter().cloned().fold(f64::MIN, f64::max),
        "Min" => w.iter().cloned().fold(f64::MAX, f64::min),
        "WMA" => {
            let total: f64 = (1..=w.len()).map(|k| k as f64).sum();
            w.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v).sum::<f64>() / total
        }
        "EMA" => {
            let a = 2.0 / (n + 1.0);
            let weights: Vec<f64> = (0..w.len()).map(|k| (1.0 - a).powi(k as i32)).collect();
            let num: f64 = w.iter().rev().zip(&weights).map(|(v, wt)| v * wt).sum();
            num / weights.iter().sum::<f64>()
        }
        _ => unreachable!("{op}"),
    }
}

fn pair_window(op: &str, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    match op {
        "Cov" => sxy / (n - 1.0),
        "Corr" => {
            let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
            let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
            if spread_is_zero(sxx / n, x) || spread_is_zero(syy / n, y) {
                return f64::NAN;
            }
            sxy / (sxx.sqrt() * syy.sqrt())
        }
        _ => unreachable!(),
    }
}

/// Average 1-based rank of each valid tradable cell within its day.
fn cs_rank(x: &Grid, tradable: &[Vec<bool>]) -> Grid {
    let (n, d) = (x.len(), x[0].len());
    let mut out = vec![vec![f64::NAN; d]; n];
    for t in 0..d {
        let live: Vec<usize> = (0..n).filter(|&i| tradable[i][t] && !x[i][t].is_nan()).collect();
        for &i in &live {
            let v = x[i][t];
            let below = live.iter().filter(|&&j| x[j][t] < v).count() as f64;
            let ties = live.iter().filter(|&&j| x[j][t] == v).count() as f64;
            out[i][t] = below + (ties + 1.0) / 2.0;
        }
    }
    out
}
