use core::fmt;

use alloc::vec::Vec;

/// Raw price/volume columns of a panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    Open,
    High,
    Low,
    Close,
    Volume,
    Vwap,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Open,
        Feature::High,
        Feature::Low,
        Feature::Close,
        Feature::Volume,
        Feature::Vwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Open => "open",
            Feature::High => "high",
            Feature::Low => "low",
            Feature::Close => "close",
            Feature::Volume => "volume",
            Feature::Vwap => "vwap",
        }
    }

    /// Column position inside a panel's feature block.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.iter().copied().find(|f| f.name() == name)
    }
}

pub const TIME_DELTAS: [u16; 7] = [1, 5, 10, 20, 30, 40, 50];

pub const CONSTANTS: [f64; 13] = [
    -30.0, -10.0, -5.0, -2.0, -1.0, -0.5, -0.01, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryOp {
    Sign,
    Abs,
    Log,
    CsRank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Greater,
    Less,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TsUnaryOp {
    Ref,
    Rank,
    Skew,
    Kurt,
    Mean,
    Med,
    Sum,
    Std,
    Var,
    Max,
    Min,
    Wma,
    Ema,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TsBinaryOp {
    Cov,
    Corr,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 4] = [UnaryOp::Sign, UnaryOp::Abs, UnaryOp::Log, UnaryOp::CsRank];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Sign => "Sign",
            UnaryOp::Abs => "Abs",
            UnaryOp::Log => "Log",
            UnaryOp::CsRank => "CSRank",
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 6] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Greater,
        BinaryOp::Less,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "Add",
            BinaryOp::Sub => "Sub",
            BinaryOp::Mul => "Mul",
            BinaryOp::Div => "Div",
            BinaryOp::Greater => "Greater",
            BinaryOp::Less => "Less",
        }
    }
}

impl TsUnaryOp {
    pub const ALL: [TsUnaryOp; 13] = [
        TsUnaryOp::Ref,
        TsUnaryOp::Rank,
        TsUnaryOp::Skew,
        TsUnaryOp::Kurt,
        TsUnaryOp::Mean,
        TsUnaryOp::Med,
        TsUnaryOp::Sum,
        TsUnaryOp::Std,
        TsUnaryOp::Var,
        TsUnaryOp::Max,
        TsUnaryOp::Min,
        TsUnaryOp::Wma,
        TsUnaryOp::Ema,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TsUnaryOp::Ref => "Ref",
            TsUnaryOp::Rank => "Rank",
            TsUnaryOp::Skew => "Skew",
            TsUnaryOp::Kurt => "Kurt",
            TsUnaryOp::Mean => "Mean",
            TsUnaryOp::Med => "Med",
            TsUnaryOp::Sum => "Sum",
            TsUnaryOp::Std => "Std",
            TsUnaryOp::Var => "Var",
            TsUnaryOp::Max => "Max",
            TsUnaryOp::Min => "Min",
            TsUnaryOp::Wma => "WMA",
            TsUnaryOp::Ema => "EMA",
        }
    }
}

impl TsBinaryOp {
    pub const ALL: [TsBinaryOp; 2] = [TsBinaryOp::Cov, TsBinaryOp::Corr];

    pub fn name(self) -> &'static str {
        match self {
            TsBinaryOp::Cov => "Cov",
            TsBinaryOp::Corr => "Corr",
        }
    }
}

/// One symbol of the mining alphabet.
///
/// Time deltas and constants carry their position in [`TIME_DELTAS`] and
/// [`CONSTANTS`] so that tokens stay `Eq + Ord + Hash`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Feature(Feature),
    TimeDelta(u8),
    Constant(u8),
    Unary(UnaryOp),
    Binary(BinaryOp),
    TsUnary(TsUnaryOp),
    TsBinary(TsBinaryOp),
    Beg,
    End,
}

impl Token {
    /// Token for a window length, if it is one of the allowed deltas.
    pub fn delta(days: u16) -> Option<Token> {
        TIME_DELTAS
            .iter()
            .position(|&d| d == days)
            .map(|i| Token::TimeDelta(i as u8))
    }

    /// Token for a constant, if the value is exactly one of the allowed constants.
    pub fn constant(value: f64) -> Option<Token> {
        CONSTANTS
            .iter()
            .position(|&c| c == value)
            .map(|i| Token::Constant(i as u8))
    }

    pub fn delta_days(self) -> Option<usize> {
        match self {
            Token::TimeDelta(i) => Some(TIME_DELTAS[i as usize] as usize),
            _ => None,
        }
    }

    pub fn constant_value(self) -> Option<f64> {
        match self {
            Token::Constant(i) => Some(CONSTANTS[i as usize]),
            _ => None,
        }
    }

    /// Position in the full vocabulary returned by [`token_vocabulary`].
    pub fn vocab_index(self) -> usize {
        const DELTA0: usize = 6;
        const CONST0: usize = DELTA0 + 7;
        const UNARY0: usize = CONST0 + 13;
        const BINARY0: usize = UNARY0 + 4;
        const TSU0: usize = BINARY0 + 6;
        const TSB0: usize = TSU0 + 13;
        const BEG: usize = TSB0 + 2;
        match self {
            Token::Feature(f) => f as usize,
            Token::TimeDelta(i) => DELTA0 + i as usize,
            Token::Constant(i) => CONST0 + i as usize,
            Token::Unary(op) => UNARY0 + op as usize,
            Token::Binary(op) => BINARY0 + op as usize,
            Token::TsUnary(op) => TSU0 + op as usize,
            Token::TsBinary(op) => TSB0 + op as usize,
            Token::Beg => BEG,
            Token::End => BEG + 1,
        }
    }

    /// Token whose display form is `name`: `close`, `20` (a delta), `-0.5`
    /// (a constant), `Mean`, `BEG`.
    pub fn from_name(name: &str) -> Option<Token> {
        use alloc::string::ToString;
        token_vocabulary().into_iter().find(|t| t.to_string() == name)
    }

    pub fn is_operator(self) -> bool {
        matches!(
            self,
            Token::Unary(_) | Token::Binary(_) | Token::TsUnary(_) | Token::TsBinary(_)
        )
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Token::Feature(x) => f.write_str(x.name()),
            Token::TimeDelta(_) => write!(f, "{}", self.delta_days().unwrap_or(0)),
            Token::Constant(_) => write!(f, "{:?}", self.constant_value().unwrap_or(0.0)),
            Token::Unary(op) => f.write_str(op.name()),
            Token::Binary(op) => f.write_str(op.name()),
            Token::TsUnary(op) => f.write_str(op.name()),
            Token::TsBinary(op) => f.write_str(op.name()),
            Token::Beg => f.write_str("BEG"),
            Token::End => f.write_str("END"),
        }
    }
}

pub const VOCAB_SIZE: usize = 53;

/// The full alphabet in its fixed order: features, time deltas, constants,
/// unary, binary, time-series unary and time-series binary operators, then
/// BEG and END. A token's position here is its [`Token::vocab_index`] and the
/// policy head's output index.
pub fn token_vocabulary() -> Vec<Token> {
    let mut v = Vec::with_capacity(VOCAB_SIZE);
    v.extend(Feature::ALL.iter().map(|&f| Token::Feature(f)));
    v.extend((0..TIME_DELTAS.len() as u8).map(Token::TimeDelta));
    v.extend((0..CONSTANTS.len() as u8).map(Token::Constant));
    v.extend(UnaryOp::ALL.iter().map(|&op| Token::Unary(op)));
    v.extend(BinaryOp::ALL.iter().map(|&op| Token::Binary(op)));
    v.extend(TsUnaryOp::ALL.iter().map(|&op| Token::TsUnary(op)));
    v.extend(TsBinaryOp::ALL.iter().map(|&op| Token::TsBinary(op)));
    v.push(Token::Beg);
    v.push(Token::End);
    v
}
