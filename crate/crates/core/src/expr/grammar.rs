//! Typed stack machine behind RPN legality.
//!
//! Every body token is typed against a stack of [`StackType`]s:
//!
//! | token        | consumes                         | pushes  |
//! |--------------|----------------------------------|---------|
//! | feature      | -                                | Series  |
//! | constant     | -                                | Scalar  |
//! | time delta   | - (top must be Series)           | Delta   |
//! | unary op     | Series                           | Series  |
//! | binary op    | two of Series/Scalar, >= 1 Series | Series  |
//! | ts unary op  | Series, Delta                    | Series  |
//! | ts binary op | Series, Series, Delta            | Series  |
//!
//! A delta is only ever the last-pushed argument of a time-series operator,
//! so once one is on top the next token must be that operator. A sequence is a
//! complete expression when its stack is exactly `[Series]`.

use alloc::vec::Vec;

use super::token::{token_vocabulary, Token};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StackType {
    Series,
    Scalar,
    Delta,
}

/// Sentinel returned by [`TypeStack::min_completion`] for dead ends.
pub const UNREACHABLE: usize = usize::MAX / 4;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeStack(Vec<StackType>);

impl TypeStack {
    pub fn new() -> Self {
        TypeStack(Vec::new())
    }

    /// Types the given body tokens. `None` if any token is inapplicable.
    pub fn from_tokens(tokens: &[Token]) -> Option<TypeStack> {
        let mut s = TypeStack::new();
        for &t in tokens {
            if !s.push(t) {
                return None;
            }
        }
        Some(s)
    }

    pub fn as_slice(&self) -> &[StackType] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True iff the stack holds exactly one Series.
    pub fn is_complete(&self) -> bool {
        self.0 == [StackType::Series]
    }

    fn top(&self, depth: usize) -> Option<StackType> {
        self.0.len().checked_sub(depth + 1).map(|i| self.0[i])
    }

    /// Whether `token` may be appended.
    pub fn accepts(&self, token: Token) -> bool {
        use StackType::*;
        let top = self.top(0);
        match token {
            Token::Feature(_) | Token::Constant(_) => top != Some(Delta),
            Token::TimeDelta(_) => top == Some(Series),
            Token::Unary(_) => top == Some(Series),
            Token::Binary(_) => match (self.top(1), top) {
                (Some(a), Some(b)) => a != Delta && b != Delta && (a == Series || b == Series),
                _ => false,
            },
            Token::TsUnary(_) => top == Some(Delta) && self.top(1) == Some(Series),
            Token::TsBinary(_) => {
                top == Some(Delta) && self.top(1) == Some(Series) && self.top(2) == Some(Series)
            }
            Token::Beg | Token::End => false,
        }
    }

    /// Applies `token`, returning false (and leaving the stack untouched) if it
    /// is not accepted.
    pub fn push(&mut self, token: Token) -> bool {
        if !self.accepts(token) {
            return false;
        }
        use StackType::*;
        let s = &mut self.0;
        match token {
            Token::Feature(_) => s.push(Series),
            Token::Constant(_) => s.push(Scalar),
            Token::TimeDelta(_) => s.push(Delta),
            Token::Unary(_) => {}
            Token::Binary(_) => {
                s.pop();
                s.pop();
                s.push(Series);
            }
            Token::TsUnary(_) => {
                s.pop();
            }
            Token::TsBinary(_) => {
                s.pop();
                s.pop();
            }
            Token::Beg | Token::End => unreachable!(),
        }
        true
    }

    /// Minimum number of further body tokens needed to reach a complete
    /// expression using only tokens that `caps` allows, or [`UNREACHABLE`].
    pub fn min_completion(&self, caps: &Capabilities) -> usize {
        use StackType::*;
        let s = &self.0;
        if s.last() == Some(&Delta) {
            let below = &s[..s.len() - 1];
            let mut best = UNREACHABLE;
            if caps.ts_unary && below.last() == Some(&Series) {
                best = best.min(1 + collapse_cost(below, caps));
            }
            let n = below.len();
            if caps.ts_binary && n >= 2 && below[n - 1] == Series && below[n - 2] == Series {
                best = best.min(1 + collapse_cost(&below[..n - 1], caps));
            }
            return best.min(UNREACHABLE);
        }
        collapse_cost(s, caps)
    }
}

/// Cost of collapsing a delta-free stack into a single Series.
fn collapse_cost(s: &[StackType], caps: &Capabilities) -> usize {
    use StackType::*;
    let n = s.len();
    if n == 0 {
        return if caps.feature { 1 } else { UNREACHABLE };
    }
    let has_scalar = s.contains(&Scalar);
    if !caps.binary {
        // Scalars can only ever be consumed by a binary operator.
        if has_scalar {
            return UNREACHABLE;
        }
        if n == 1 {
            return 0;
        }
        return if caps.ts_binary && caps.delta { 2 * (n - 1) } else { UNREACHABLE };
    }
    let top_needs_partner = s[n - 1] == Scalar && (n == 1 || s[n - 2] == Scalar);
    if top_needs_partner {
        if !caps.feature {
            return UNREACHABLE;
        }
        return n - 1 + 2;
    }
    n - 1
}

/// Which token classes a vocabulary offers, for reachability analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub feature: bool,
    pub delta: bool,
    pub binary: bool,
    pub ts_unary: bool,
    pub ts_binary: bool,
}

impl Capabilities {
    pub fn of(tokens: &[Token]) -> Capabilities {
        let mut c = Capabilities {
            feature: false,
            delta: false,
            binary: false,
            ts_unary: false,
            ts_binary: false,
        };
        for t in tokens {
            match t {
                Token::Feature(_) => c.feature = true,
                Token::TimeDelta(_) => c.delta = true,
                Token::Binary(_) => c.binary = true,
                Token::TsUnary(_) => c.ts_unary = true,
                Token::TsBinary(_) => c.ts_binary = true,
                _ => {}
            }
        }
        // Time-series operators are unusable without a delta and vice versa.
        if !c.delta {
            c.ts_unary = false;
            c.ts_binary = false;
        }
        c
    }
}

/// An ordered action alphabet: a subset of the full vocabulary plus BEG and
/// END. Positions in [`Vocabulary::tokens`] index the policy's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    caps: Capabilities,
}

impl Vocabulary {
    pub fn full() -> Vocabulary {
        Vocabulary::from_tokens(&token_vocabulary())
    }

    /// Builds a vocabulary from any token list. Duplicates are dropped, the
    /// order is normalised to the full vocabulary's order and BEG/END are
    /// always present.
    pub fn from_tokens(tokens: &[Token]) -> Vocabulary {
        let mut v: Vec<Token> = tokens
            .iter()
            .copied()
            .filter(|t| !matches!(t, Token::Beg | Token::End))
            .collect();
        v.sort_by_key(|t| t.vocab_index());
        v.dedup();
        let caps = Capabilities::of(&v);
        v.push(Token::Beg);
        v.push(Token::End);
        Vocabulary { tokens: v, caps }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, index: usize) -> Token {
        self.tokens[index]
    }

    pub fn index_of(&self, token: Token) -> Option<usize> {
        self.tokens.iter().position(|&t| t == token)
    }

    pub fn beg_index(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn end_index(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    /// Indices of tokens that keep a completion within `budget` further body
    /// tokens reachable. END is included iff `stack` is complete; it does not
    /// consume budget.
    pub fn legal_indices(&self, stack: &TypeStack, budget: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut next = TypeStack(Vec::with_capacity(stack.len() + 1));
        for (i, &t) in self.tokens.iter().enumerate() {
            match t {
                Token::Beg => continue,
                Token::End => {
                    if stack.is_complete() {
                        out.push(i);
                    }
                }
                _ => {
                    if budget == 0 || !stack.accepts(t) {
                        continue;
                    }
                    next.0.clear();
                    next.0.extend_from_slice(&stack.0);
                    next.push(t);
                    if next.min_completion(&self.caps) < budget {
                        out.push(i);
                    }
                }
            }
        }
        out
    }

    /// Token form of [`Vocabulary::legal_indices`] for a body prefix.
    pub fn legal_next(&self, prefix: &[Token], budget: usize) -> Vec<Token> {
        match TypeStack::from_tokens(prefix) {
            Some(stack) => self
                .legal_indices(&stack, budget)
                .into_iter()
                .map(|i| self.tokens[i])
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Legal continuations of `prefix` over the full vocabulary; see
/// [`Vocabulary::legal_indices`].
pub fn legal_next(prefix: &[Token], remaining_budget: usize) -> Vec<Token> {
    Vocabulary::full().legal_next(prefix, remaining_budget)
}
