//! Alpha expressions: the token alphabet, RPN legality, the canonical text
//! form and vectorised evaluation over a panel.

mod eval;
mod grammar;
mod text;
mod token;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use eval::{evaluate, try_evaluate};
pub use grammar::{legal_next, Capabilities, StackType, TypeStack, Vocabulary, UNREACHABLE};
pub use text::parse;
pub use token::{
    token_vocabulary, BinaryOp, Feature, Token, TsBinaryOp, TsUnaryOp, UnaryOp, CONSTANTS,
    TIME_DELTAS, VOCAB_SIZE,
};

/// Longest allowed body: a 30-token episode minus BEG and END.
pub const MAX_EXPR_LEN: usize = 28;

#[derive(Clone, Debug, PartialEq)]
pub enum ExprError {
    /// Malformed text at a byte offset.
    Parse { pos: usize, msg: String },
    /// An operator applied to the wrong number of arguments.
    Arity {
        pos: usize,
        op: &'static str,
        expected: usize,
        found: usize,
    },
    /// Token sequence that does not type-check to a single series.
    InvalidExpression(String),
    TooLong(usize),
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::Parse { pos, msg } => write!(f, "parse error at {pos}: {msg}"),
            ExprError::Arity {
                pos,
                op,
                expected,
                found,
            } => write!(
                f,
                "arity error at {pos}: {op} takes {expected} arguments, got {found}"
            ),
            ExprError::InvalidExpression(msg) => write!(f, "invalid expression: {msg}"),
            ExprError::TooLong(n) => {
                write!(f, "expression has {n} tokens, the limit is {MAX_EXPR_LEN}")
            }
        }
    }
}

impl core::error::Error for ExprError {}

/// A validated RPN token sequence (BEG/END excluded) that evaluates to a
/// single series.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expression {
    tokens: Vec<Token>,
}

impl Expression {
    pub fn new(tokens: Vec<Token>) -> Result<Expression, ExprError> {
        if tokens.len() > MAX_EXPR_LEN {
            return Err(ExprError::TooLong(tokens.len()));
        }
        let mut stack = TypeStack::new();
        for (i, &t) in tokens.iter().enumerate() {
            if !stack.push(t) {
                return Err(ExprError::InvalidExpression(alloc::format!(
                    "token {i} ({t}) does not apply to stack {:?}",
                    stack.as_slice()
                )));
            }
        }
        if !stack.is_complete() {
            return Err(ExprError::InvalidExpression(alloc::format!(
                "sequence leaves stack {:?}",
                stack.as_slice()
            )));
        }
        Ok(Expression { tokens })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Canonical infix text, e.g. `Div(Mean(close, 5), close)`.
    pub fn unparse(&self) -> String {
        text::unparse(&self.tokens)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.unparse())
    }
}

impl core::str::FromStr for Expression {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}
