//! The alpha-mining MDP.
//!
//! A state is the token sequence chosen so far, starting at BEG. Actions
//! append one token. Whenever the body becomes a complete expression the step
//! pays `IC - lambda * mean(mutIC with pool members)` on the training window;
//! END adds the body to the pool and pays the composite's training IC.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::expr::{try_evaluate, Expression, Token, TypeStack, Vocabulary};
use crate::matrix::AlphaMatrix;
use crate::panel::{compute_ic, Panel};
use crate::pool::{AlphaPool, PoolError};

/// Cap on tokens per episode, counting BEG and END.
pub const MAX_EPISODE_LEN: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub enum EnvError {
    TerminalState,
    IllegalAction(Token),
    /// END on a body that cannot be added to the pool.
    Evaluation(PoolError),
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::TerminalState => f.write_str("state is terminal"),
            EnvError::IllegalAction(t) => write!(f, "illegal action {t}"),
            EnvError::Evaluation(e) => write!(f, "evaluation failed: {e}"),
        }
    }
}

impl core::error::Error for EnvError {}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MdpState {
    tokens: Vec<Token>,
}

impl Default for MdpState {
    fn default() -> Self {
        MdpState::initial()
    }
}

impl MdpState {
    /// The state holding only BEG.
    pub fn initial() -> MdpState {
        MdpState {
            tokens: vec![Token::Beg],
        }
    }

    /// State from a full token sequence; BEG is prepended when absent.
    pub fn from_tokens(tokens: &[Token]) -> MdpState {
        let mut s = MdpState::initial();
        s.tokens
            .extend(tokens.iter().copied().skip_while(|&t| t == Token::Beg));
        s
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Tokens after BEG, excluding a trailing END.
    pub fn body(&self) -> &[Token] {
        let end = if self.done() {
            self.tokens.len() - 1
        } else {
            self.tokens.len()
        };
        &self.tokens[1..end]
    }

    /// Number of tokens so far, BEG included.
    pub fn step(&self) -> usize {
        self.tokens.len()
    }

    pub fn done(&self) -> bool {
        self.tokens.last() == Some(&Token::End)
    }

    pub fn child(&self, action: Token) -> MdpState {
        let mut tokens = self.tokens.clone();
        tokens.push(action);
        MdpState { tokens }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: MdpState,
    pub action: Token,
    /// Position of `action` in the environment's vocabulary.
    pub action_index: usize,
    /// Vocabulary indices that were legal in `state`.
    pub legal: Vec<usize>,
    pub reward: f64,
    pub next_state: MdpState,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub cumulative_reward: f64,
}

impl Trajectory {
    pub fn new() -> Trajectory {
        Trajectory::default()
    }

    pub fn push(&mut self, t: Transition) {
        self.cumulative_reward += t.reward;
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.transitions.iter().map(|t| t.reward)
    }

    /// Full token sequence, BEG through the last action.
    pub fn tokens(&self) -> Vec<Token> {
        let mut out = vec![Token::Beg];
        out.extend(self.transitions.iter().map(|t| t.action));
        out
    }

    /// The body as an expression, if the trajectory spells a valid one.
    pub fn expression(&self) -> Option<Expression> {
        let toks: Vec<Token> = self
            .transitions
            .iter()
            .map(|t| t.action)
            .filter(|&t| t != Token::End)
            .collect();
        Expression::new(toks).ok()
    }

    pub fn is_terminal(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.action == Token::End)
    }
}

/// A deterministic token-appending MDP.
pub trait Environment {
    fn vocabulary(&self) -> &Vocabulary;

    /// Vocabulary indices legal in `state`, ascending.
    fn legal_actions(&self, state: &MdpState) -> Result<Vec<usize>, EnvError>;

    /// Applies `action`. `rng` feeds any randomness of side effects (pool
    /// weight initialisation); the reward itself is deterministic.
    fn step<R: Rng + ?Sized>(
        &mut self,
        state: &MdpState,
        action: Token,
        rng: &mut R,
    ) -> Result<Transition, EnvError>;

    /// [`Environment::step`], but an END whose body cannot be evaluated
    /// becomes a zero-reward terminal transition.
    fn step_lenient<R: Rng + ?Sized>(
        &mut self,
        state: &MdpState,
        action: Token,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        match self.step(state, action, rng) {
            Err(EnvError::Evaluation(_)) => {
                let legal = self.legal_actions(state)?;
                let action_index = self
                    .vocabulary()
                    .index_of(action)
                    .ok_or(EnvError::IllegalAction(action))?;
                Ok(Transition {
                    state: state.clone(),
                    action,
                    action_index,
                    legal,
                    reward: 0.0,
                    next_state: state.child(action),
                })
            }
            other => other,
        }
    }
}

/// Body tokens still available in `state` under an episode cap of
/// `max_len` tokens including BEG and END.
pub fn body_budget(state: &MdpState, max_len: usize) -> usize {
    max_len.saturating_sub(state.step() + 1)
}

fn legal_in(vocab: &Vocabulary, state: &MdpState, max_len: usize) -> Result<Vec<usize>, EnvError> {
    if state.done() {
        return Err(EnvError::TerminalState);
    }
    let stack = TypeStack::from_tokens(state.body()).ok_or(EnvError::TerminalState)?;
    Ok(vocab.legal_indices(&stack, body_budget(state, max_len)))
}

fn checked_action(
    vocab: &Vocabulary,
    state: &MdpState,
    action: Token,
    max_len: usize,
) -> Result<(usize, Vec<usize>), EnvError> {
    let legal = legal_in(vocab, state, max_len)?;
    let idx = vocab
        .index_of(action)
        .filter(|i| legal.contains(i))
        .ok_or(EnvError::IllegalAction(action))?;
    Ok((idx, legal))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    /// Weight of the mean mutual-IC penalty in intermediate rewards.
    pub lambda: f64,
    pub max_episode_len: usize,
    /// Evaluated bodies kept in memory.
    pub cache_capacity: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            lambda: 0.1,
            max_episode_len: MAX_EPISODE_LEN,
            cache_capacity: 256,
        }
    }
}

#[derive(Clone, Debug)]
struct Evaluated {
    /// Standardized alpha over the whole panel.
    cache: AlphaMatrix,
    /// Training-window IC, `None` without overlap.
    ic: Option<f64>,
}

/// The mining MDP over a panel, driving an [`AlphaPool`].
#[derive(Clone, Debug)]
pub struct AlphaEnv<'a> {
    panel: &'a Panel,
    pool: AlphaPool,
    vocab: Vocabulary,
    config: EnvConfig,
    cache: BTreeMap<Vec<Token>, Option<Evaluated>>,
    order: VecDeque<Vec<Token>>,
}

impl<'a> AlphaEnv<'a> {
    pub fn new(panel: &'a Panel, pool: AlphaPool, vocab: Vocabulary, config: EnvConfig) -> Self {
        AlphaEnv {
            panel,
            pool,
            vocab,
            config,
            cache: BTreeMap::new(),
            order: VecDeque::new(),
        }
    }

    pub fn pool(&self) -> &AlphaPool {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut AlphaPool {
        &mut self.pool
    }

    pub fn into_pool(self) -> AlphaPool {
        self.pool
    }

    pub fn panel(&self) -> &Panel {
        self.panel
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    fn evaluated(&mut self, body: &[Token]) -> Option<Evaluated> {
        if let Some(hit) = self.cache.get(body) {
            return hit.clone();
        }
        let value = try_evaluate(body, self.panel).ok().and_then(|raw| {
            let cache = raw.standardize_daily();
            let train = self.pool.train_range();
            let has_train = (0..cache.n_stocks())
                .any(|i| cache.row(i)[train.clone()].iter().any(|v| !v.is_nan()));
            if !has_train {
                return None;
            }
            let ic = compute_ic(&cache, self.pool.target(), train).ok().map(|m| m.ic);
            Some(Evaluated { cache, ic })
        });
        if self.config.cache_capacity > 0 {
            if self.order.len() >= self.config.cache_capacity {
                if let Some(old) = self.order.pop_front() {
                    self.cache.remove(&old);
                }
            }
            self.order.push_back(body.to_vec());
            self.cache.insert(body.to_vec(), value.clone());
        }
        value
    }

    /// `IC - lambda * mean(mutIC)` of a complete body against the current
    /// pool; 0 when the body is incomplete or cannot be evaluated.
    pub fn intermediate_reward(&mut self, body: &[Token]) -> f64 {
        if !TypeStack::from_tokens(body).is_some_and(|s| s.is_complete()) {
            return 0.0;
        }
        let Some(ev) = self.evaluated(body) else { return 0.0 };
        let Some(ic) = ev.ic else { return 0.0 };
        let mut_ics = self.pool.mut_ics(&ev.cache);
        intermediate_reward(ic, &mut_ics, self.config.lambda)
    }

    fn end_reward<R: Rng + ?Sized>(&mut self, body: &[Token], rng: &mut R) -> Result<f64, EnvError> {
        let expr = Expression::new(body.to_vec())
            .map_err(|_| EnvError::Evaluation(PoolError::Evaluation))?;
        let ev = self.evaluated(body).ok_or(EnvError::Evaluation(PoolError::Evaluation))?;
        let out = self
            .pool
            .add_standardized(expr, ev.cache, rng)
            .map_err(EnvError::Evaluation)?;
        Ok(out.composite_ic)
    }
}

/// `ic - lambda * mean(mut_ics)`, with no penalty for an empty pool.
pub fn intermediate_reward(ic: f64, mut_ics: &[f64], lambda: f64) -> f64 {
    if mut_ics.is_empty() {
        return ic;
    }
    ic - lambda * mut_ics.iter().sum::<f64>() / mut_ics.len() as f64
}

impl Environment for AlphaEnv<'_> {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn legal_actions(&self, state: &MdpState) -> Result<Vec<usize>, EnvError> {
        legal_in(&self.vocab, state, self.config.max_episode_len)
    }

    fn step<R: Rng + ?Sized>(
        &mut self,
        state: &MdpState,
        action: Token,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        let (action_index, legal) =
            checked_action(&self.vocab, state, action, self.config.max_episode_len)?;
        let next_state = state.child(action);
        let reward = if action == Token::End {
            self.end_reward(state.body(), rng)?
        } else {
            self.intermediate_reward(next_state.body())
        };
        Ok(Transition {
            state: state.clone(),
            action,
            action_index,
            legal,
            reward,
            next_state,
        })
    }
}

/// An environment with the mining MDP's action rules and caller-supplied
/// rewards, for toy problems. The reward function receives the new body and
/// whether the action was END.
pub struct RewardFnEnv<F> {
    vocab: Vocabulary,
    max_len: usize,
    reward: F,
}

impl<F: FnMut(&[Token], bool) -> f64> RewardFnEnv<F> {
    pub fn new(vocab: Vocabulary, max_episode_len: usize, reward: F) -> Self {
        RewardFnEnv {
            vocab,
            max_len: max_episode_len,
            reward,
        }
    }
}

impl<F: FnMut(&[Token], bool) -> f64> Environment for RewardFnEnv<F> {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn legal_actions(&self, state: &MdpState) -> Result<Vec<usize>, EnvError> {
        legal_in(&self.vocab, state, self.max_len)
    }

    fn step<R: Rng + ?Sized>(
        &mut self,
        state: &MdpState,
        action: Token,
        _rng: &mut R,
    ) -> Result<Transition, EnvError> {
        let (action_index, legal) = checked_action(&self.vocab, state, action, self.max_len)?;
        let next_state = state.child(action);
        let reward = (self.reward)(next_state.body(), action == Token::End);
        Ok(Transition {
            state: state.clone(),
            action,
            action_index,
            legal,
            reward,
            next_state,
        })
    }
}
