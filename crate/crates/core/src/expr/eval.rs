//! Vectorised RPN evaluation.
//!
//! Operator semantics:
//!
//! * `Sign(x)` is 1 for positive `x`, else 0. `Greater`/`Less` are 0/1
//!   indicators.
//! * `Log` of a non-positive value, division by zero and any non-finite
//!   result are missing. A missing input makes the output missing.
//! * `CSRank` ranks the tradable, valid cells of each day (1..m, ties get the
//!   average rank); other cells are missing.
//! * Time-series operators use the trailing window of `t` days ending today
//!   and are missing until the window is full or if any cell in it is
//!   missing. `Ref(x, t)` is `x` from `t` days ago.
//! * `Rank(x, t)` is today's average rank within the window divided by `t`.
//! * `Std`, `Var` and `Cov` use the `t - 1` denominator (missing for `t = 1`).
//!   `Skew` and `Kurt` (excess) use population moments. `Skew`, `Kurt` and
//!   `Corr` are missing on windows with no dispersion.
//! * `WMA` weights today `t`, yesterday `t - 1`, ..., oldest 1. `EMA` uses
//!   smoothing `a = 2 / (t + 1)`: weights `(1 - a)^k` for the value `k` days
//!   back, normalised over the window.

use alloc::vec::Vec;

use super::token::{BinaryOp, Token, TsBinaryOp, TsUnaryOp, UnaryOp};
use super::{ExprError, Expression};
use crate::matrix::AlphaMatrix;
use crate::panel::{rank_average, Panel};

enum Value {
    Series(AlphaMatrix),
    Scalar(f64),
    Delta(usize),
}

/// Evaluates a validated expression over the whole panel.
pub fn evaluate(expr: &Expression, panel: &Panel) -> AlphaMatrix {
    try_evaluate(expr.tokens(), panel).expect("validated expression")
}

/// Evaluates a raw RPN body, rejecting sequences that do not type-check.
pub fn try_evaluate(tokens: &[Token], panel: &Panel) -> Result<AlphaMatrix, ExprError> {
    let bad = |msg: &str| ExprError::InvalidExpression(msg.into());
    let mut stack: Vec<Value> = Vec::with_capacity(8);
    for &tok in tokens {
        let v = match tok {
            Token::Feature(f) => Value::Series(panel.feature(f).clone()),
            Token::Constant(_) => Value::Scalar(tok.constant_value().unwrap_or(f64::NAN)),
            Token::TimeDelta(_) => Value::Delta(tok.delta_days().unwrap_or(1)),
            Token::Unary(op) => match stack.pop() {
                Some(Value::Series(x)) => Value::Series(unary(op, &x, panel)),
                _ => return Err(bad("unary operator needs a series")),
            },
            Token::Binary(op) => {
                let (b, a) = (stack.pop(), stack.pop());
                match (a, b) {
                    (Some(Value::Series(x)), Some(Value::Series(y))) => {
                        Value::Series(x.zip_map(&y, |p, q| binary(op, p, q)))
                    }
                    (Some(Value::Series(x)), Some(Value::Scalar(c))) => {
                        Value::Series(x.map(|p| binary(op, p, c)))
                    }
                    (Some(Value::Scalar(c)), Some(Value::Series(y))) => {
                        Value::Series(y.map(|q| binary(op, c, q)))
                    }
                    _ => return Err(bad("binary operator needs at least one series")),
                }
            }
            Token::TsUnary(op) => {
                let (d, x) = (stack.pop(), stack.pop());
                match (x, d) {
                    (Some(Value::Series(x)), Some(Value::Delta(w))) => {
                        Value::Series(rolling_unary(op, &x, w))
                    }
                    _ => return Err(bad("time-series operator needs (series, delta)")),
                }
            }
            Token::TsBinary(op) => {
                let (d, y, x) = (stack.pop(), stack.pop(), stack.pop());
                match (x, y, d) {
                    (Some(Value::Series(x)), Some(Value::Series(y)), Some(Value::Delta(w))) => {
                        Value::Series(rolling_binary(op, &x, &y, w))
                    }
                    _ => return Err(bad("time-series operator needs (series, series, delta)")),
                }
            }
            Token::Beg | Token::End => return Err(bad("BEG/END inside an expression body")),
        };
        stack.push(v);
    }
    match (stack.pop(), stack.is_empty()) {
        (Some(Value::Series(m)), true) => Ok(m),
        _ => Err(bad("expression does not reduce to a single series")),
    }
}

fn unary(op: UnaryOp, x: &AlphaMatrix, panel: &Panel) -> AlphaMatrix {
    match op {
        UnaryOp::Sign => x.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        UnaryOp::Abs => x.map(f64::abs),
        UnaryOp::Log => x.map(|v| if v > 0.0 { libm::log(v) } else { f64::NAN }),
        UnaryOp::CsRank => cs_rank(x, panel),
    }
}

fn cs_rank(x: &AlphaMatrix, panel: &Panel) -> AlphaMatrix {
    let (n, d) = (x.n_stocks(), x.n_days());
    let mut out = AlphaMatrix::missing(n, d);
    let mut idx = Vec::with_capacity(n);
    let mut vals = Vec::with_capacity(n);
    for t in 0..d {
        idx.clear();
        vals.clear();
        for i in 0..n {
            if panel.is_tradable(i, t) {
                if let Some(v) = x.get(i, t) {
                    idx.push(i);
                    vals.push(v);
                }
            }
        }
        for (&i, r) in idx.iter().zip(rank_average(&vals)) {
            out.set(i, t, r);
        }
    }
    out
}

#[inline]
fn binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                f64::NAN
            } else {
                a / b
            }
        }
        BinaryOp::Greater => f64::from(u8::from(a > b)),
        BinaryOp::Less => f64::from(u8::from(a < b)),
    }
}

/// Whether a window's spread is indistinguishable from zero.
#[inline]
pub(crate) fn flat(m2: f64, window: &[f64]) -> bool {
    let scale = window.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    !(libm::sqrt(m2) > 1e-10 * scale)
}

fn rolling_unary(op: TsUnaryOp, x: &AlphaMatrix, w: usize) -> AlphaMatrix {
    let (n, d) = (x.n_stocks(), x.n_days());
    let mut out = AlphaMatrix::missing(n, d);
    let mut scratch = Vec::with_capacity(w);
    for i in 0..n {
        let row = x.row(i);
        for t in 0..d {
            let v = if op == TsUnaryOp::Ref {
                if t >= w {
                    row[t - w]
                } else {
                    f64::NAN
                }
            } else {
                if t + 1 < w {
                    continue;
                }
                let win = &row[t + 1 - w..=t];
                if win.iter().any(|v| v.is_nan()) {
                    continue;
                }
                window_stat(op, win, &mut scratch)
            };
            out.set(i, t, v);
        }
    }
    out
}

fn window_stat(op: TsUnaryOp, win: &[f64], scratch: &mut Vec<f64>) -> f64 {
    let w = win.len();
    let nf = w as f64;
    let mean = || win.iter().sum::<f64>() / nf;
    let central = |k: i32| {
        let m = mean();
        win.iter().map(|v| libm::pow(v - m, k as f64)).sum::<f64>() / nf
    };
    match op {
        TsUnaryOp::Ref => unreachable!(),
        TsUnaryOp::Rank => {
            let today = win[w - 1];
            let less = win.iter().filter(|&&v| v < today).count();
            let equal = win.iter().filter(|&&v| v == today).count();
            (less as f64 + (equal as f64 + 1.0) / 2.0) / nf
        }
        TsUnaryOp::Skew => {
            let m2 = central(2);
            if flat(m2, win) {
                return f64::NAN;
            }
            central(3) / libm::pow(m2, 1.5)
        }
        TsUnaryOp::Kurt => {
            let m2 = central(2);
            if flat(m2, win) {
                return f64::NAN;
            }
            central(4) / (m2 * m2) - 3.0
        }
        TsUnaryOp::Mean => mean(),
        TsUnaryOp::Med => {
            scratch.clear();
            scratch.extend_from_slice(win);
            scratch.sort_by(f64::total_cmp);
            if w % 2 == 1 {
                scratch[w / 2]
            } else {
                (scratch[w / 2 - 1] + scratch[w / 2]) / 2.0
            }
        }
        TsUnaryOp::Sum => win.iter().sum(),
        TsUnaryOp::Std | TsUnaryOp::Var => {
            if w < 2 {
                return f64::NAN;
            }
            let m = mean();
            let var = win.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (nf - 1.0);
            if op == TsUnaryOp::Std {
                libm::sqrt(var)
            } else {
                var
            }
        }
        TsUnaryOp::Max => win.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        TsUnaryOp::Min => win.iter().copied().fold(f64::INFINITY, f64::min),
        TsUnaryOp::Wma => {
            let num: f64 = win.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v).sum();
            num / (nf * (nf + 1.0) / 2.0)
        }
        TsUnaryOp::Ema => {
            let a = 2.0 / (nf + 1.0);
            let (mut num, mut den, mut wt) = (0.0, 0.0, 1.0);
            for v in win.iter().rev() {
                num += wt * v;
                den += wt;
                wt *= 1.0 - a;
            }
            num / den
        }
    }
}

fn rolling_binary(op: TsBinaryOp, x: &AlphaMatrix, y: &AlphaMatrix, w: usize) -> AlphaMatrix {
    let (n, d) = (x.n_stocks(), x.n_days());
    let mut out = AlphaMatrix::missing(n, d);
    if w < 2 {
        return out;
    }
    for i in 0..n {
        let (rx, ry) = (x.row(i), y.row(i));
        for t in (w - 1)..d {
            let (wx, wy) = (&rx[t + 1 - w..=t], &ry[t + 1 - w..=t]);
            if wx.iter().chain(wy).any(|v| v.is_nan()) {
                continue;
            }
            let nf = w as f64;
            let mx = wx.iter().sum::<f64>() / nf;
            let my = wy.iter().sum::<f64>() / nf;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (a, b) in wx.iter().zip(wy) {
                sxy += (a - mx) * (b - my);
                sxx += (a - mx) * (a - mx);
                syy += (b - my) * (b - my);
            }
            let v = match op {
                TsBinaryOp::Cov => sxy / (nf - 1.0),
                TsBinaryOp::Corr => {
                    if flat(sxx / nf, wx) || flat(syy / nf, wy) {
                        continue;
                    }
                    sxy / (libm::sqrt(sxx) * libm::sqrt(syy))
                }
            };
            out.set(i, t, v);
        }
    }
    out
}
