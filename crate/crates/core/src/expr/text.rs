//! Canonical infix text form of expressions.
//!
//! ```text
//! expr     = call | feature | constant ;
//! call     = name "(" args ")" ;
//! args     = expr { "," expr } [ "," delta ] ;
//! name     = "Sign" | "Abs" | "Log" | "CSRank"
//!          | "Add" | "Sub" | "Mul" | "Div" | "Greater" | "Less"
//!          | "Ref" | "Rank" | "Skew" | "Kurt" | "Mean" | "Med" | "Sum"
//!          | "Std" | "Var" | "Max" | "Min" | "WMA" | "EMA"
//!          | "Cov" | "Corr" ;
//! feature  = "open" | "high" | "low" | "close" | "volume" | "vwap" ;
//! constant = [ "-" ] digits "." digits ;     (* one of the allowed constants *)
//! delta    = digits ;                        (* one of the allowed windows *)
//! ```
//!
//! Whitespace is free between lexemes. Constants always carry a decimal
//! point and deltas never do, which keeps `Mul(close, 5.0)` and
//! `Mean(close, 5)` apart.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::token::{BinaryOp, Feature, Token, TsBinaryOp, TsUnaryOp, UnaryOp};
use super::{ExprError, Expression, StackType};

enum OpClass {
    Unary(UnaryOp),
    Binary(BinaryOp),
    TsUnary(TsUnaryOp),
    TsBinary(TsBinaryOp),
}

fn lookup_op(name: &str) -> Option<OpClass> {
    if let Some(&op) = UnaryOp::ALL.iter().find(|o| o.name() == name) {
        return Some(OpClass::Unary(op));
    }
    if let Some(&op) = BinaryOp::ALL.iter().find(|o| o.name() == name) {
        return Some(OpClass::Binary(op));
    }
    if let Some(&op) = TsUnaryOp::ALL.iter().find(|o| o.name() == name) {
        return Some(OpClass::TsUnary(op));
    }
    if let Some(&op) = TsBinaryOp::ALL.iter().find(|o| o.name() == name) {
        return Some(OpClass::TsBinary(op));
    }
    None
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

struct Parsed {
    tokens: Vec<Token>,
    ty: StackType,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        self.skip_ws();
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => self.err(self.pos, format!("expected '{c}', found '{x}'")),
            None => self.err(self.pos, format!("expected '{c}', found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Parsed, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => self.err(start, "expected an expression"),
            Some(c) if c == '-' || c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                self.skip_ws();
                if self.peek() == Some('(') {
                    self.call(name, start)
                } else if let Some(f) = Feature::from_name(name) {
                    Ok(Parsed {
                        tokens: alloc::vec![Token::Feature(f)],
                        ty: StackType::Series,
                        pos: start,
                    })
                } else {
                    self.err(start, format!("unknown feature '{name}'"))
                }
            }
            Some(c) => self.err(start, format!("unexpected character '{c}'")),
        }
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        &self.src[start..self.pos]
    }

    fn number(&mut self) -> Result<Parsed, ExprError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let mut seen_dot = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                self.pos += 1;
            } else if c == '.' && !seen_dot {
                seen_dot = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        let lit = &self.src[start..self.pos];
        if seen_dot {
            let value: f64 = match lit.parse() {
                Ok(v) => v,
                Err(_) => return self.err(start, format!("malformed constant '{lit}'")),
            };
            match Token::constant(value) {
                Some(t) => Ok(Parsed {
                    tokens: alloc::vec![t],
                    ty: StackType::Scalar,
                    pos: start,
                }),
                None => self.err(start, format!("constant {lit} is not in the alphabet")),
            }
        } else {
            let days: u16 = match lit.parse() {
                Ok(v) => v,
                Err(_) => return self.err(start, format!("malformed time delta '{lit}'")),
            };
            match Token::delta(days) {
                Some(t) => Ok(Parsed {
                    tokens: alloc::vec![t],
                    ty: StackType::Delta,
                    pos: start,
                }),
                None => self.err(
                    start,
                    format!("time delta {lit} is not allowed (constants need a decimal point)"),
                ),
            }
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Parsed, ExprError> {
        let op = match lookup_op(name) {
            Some(op) => op,
            None => return self.err(start, format!("unknown operator '{name}'")),
        };
        self.expect('(')?;
        let mut args = Vec::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            self.pos += 1;
        } else {
            loop {
                args.push(self.expr()?);
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => return self.err(self.pos, format!("expected ',' or ')', found '{c}'")),
                    None => return self.err(self.pos, "unclosed argument list"),
                }
            }
        }
        let (expected, op_token, op_name) = match op {
            OpClass::Unary(o) => (1, Token::Unary(o), o.name()),
            OpClass::Binary(o) => (2, Token::Binary(o), o.name()),
            OpClass::TsUnary(o) => (2, Token::TsUnary(o), o.name()),
            OpClass::TsBinary(o) => (3, Token::TsBinary(o), o.name()),
        };
        if args.len() != expected {
            return Err(ExprError::Arity {
                pos: start,
                op: op_name,
                expected,
                found: args.len(),
            });
        }
        use StackType::{Delta, Series};
        let ty: Vec<StackType> = args.iter().map(|a| a.ty).collect();
        let ok = match op {
            OpClass::Unary(_) => ty[0] == Series,
            OpClass::Binary(_) => {
                ty[0] != Delta && ty[1] != Delta && (ty[0] == Series || ty[1] == Series)
            }
            OpClass::TsUnary(_) => ty[0] == Series && ty[1] == Delta,
            OpClass::TsBinary(_) => ty[0] == Series && ty[1] == Series && ty[2] == Delta,
        };
        if !ok {
            let want = match op {
                OpClass::Unary(_) => "a series argument",
                OpClass::Binary(_) => "two non-delta arguments, at least one a series",
                OpClass::TsUnary(_) => "(series, delta)",
                OpClass::TsBinary(_) => "(series, series, delta)",
            };
            let bad = args
                .iter()
                .find(|a| a.ty != Series)
                .map(|a| a.pos)
                .unwrap_or(start);
            return self.err(bad, format!("{op_name} expects {want}"));
        }
        let mut tokens: Vec<Token> = args.into_iter().flat_map(|a| a.tokens).collect();
        tokens.push(op_token);
        Ok(Parsed {
            tokens,
            ty: StackType::Series,
            pos: start,
        })
    }
}

/// Parses the canonical infix form into an [`Expression`].
pub fn parse(text: &str) -> Result<Expression, ExprError> {
    let mut p = Parser { src: text, pos: 0 };
    let parsed = p.expr()?;
    p.skip_ws();
    if p.pos != text.len() {
        return p.err(p.pos, "trailing input");
    }
    if parsed.ty != StackType::Series {
        return p.err(parsed.pos, "expression must evaluate to a series");
    }
    Expression::new(parsed.tokens)
}

/// Renders a complete RPN body as infix text.
pub(super) fn unparse(tokens: &[Token]) -> String {
    let mut stack: Vec<String> = Vec::new();
    for &t in tokens {
        let s = match t {
            Token::Feature(_) | Token::Constant(_) | Token::TimeDelta(_) => t.to_string(),
            Token::Unary(op) => {
                let x = stack.pop().unwrap_or_default();
                format!("{}({x})", op.name())
            }
            Token::Binary(_) | Token::TsUnary(_) => {
                let y = stack.pop().unwrap_or_default();
                let x = stack.pop().unwrap_or_default();
                format!("{t}({x}, {y})")
            }
            Token::TsBinary(op) => {
                let d = stack.pop().unwrap_or_default();
                let y = stack.pop().unwrap_or_default();
                let x = stack.pop().unwrap_or_default();
                format!("{}({x}, {y}, {d})", op.name())
            }
            Token::Beg | Token::End => continue,
        };
        stack.push(s);
    }
    stack.pop().unwrap_or_default()
}
