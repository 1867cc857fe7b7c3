//! The mining loop: alternate tree-search sampling (which grows the alpha
//! pool on every END) with one risk-seeking policy pass over the sampled
//! trajectories.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{AlphaEnv, EnvConfig, EnvError, MAX_EPISODE_LEN};
use crate::expr::{Token, Vocabulary};
use crate::mcts::{MctsConfig, ReplayBuffer, SearchTree};
use crate::panel::{Horizon, Panel, SplitSpec};
use crate::policy::{train_epoch, Policy, PolicyConfig, PolicyError, QuantileTracker, UpdateMode};
use crate::pool::{AlphaPool, FitConfig, PoolError};

#[derive(Clone, Debug, PartialEq)]
pub enum RunError {
    Config(String),
    Env(EnvError),
    Pool(PoolError),
    Policy(PolicyError),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config: {m}"),
            RunError::Env(e) => write!(f, "environment: {e}"),
            RunError::Pool(e) => write!(f, "pool: {e}"),
            RunError::Policy(e) => write!(f, "policy: {e}"),
        }
    }
}

impl core::error::Error for RunError {}

impl From<EnvError> for RunError {
    fn from(e: EnvError) -> Self {
        RunError::Env(e)
    }
}

impl From<PoolError> for RunError {
    fn from(e: PoolError) -> Self {
        RunError::Pool(e)
    }
}

impl From<PolicyError> for RunError {
    fn from(e: PolicyError) -> Self {
        RunError::Policy(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pool_size: usize,
    pub lambda: f64,
    pub max_episode_len: usize,
    pub cycles_per_iteration: usize,
    pub iterations: usize,
    pub quantile_level: f64,
    pub beta: f64,
    pub policy_lr: f64,
    pub discount: f64,
    pub c_puct: f64,
    pub seed: u64,
    pub horizon: Horizon,
    pub update_mode: UpdateMode,
    pub fit: FitConfig,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
    /// Action tokens; `None` is the full vocabulary.
    pub vocabulary: Option<Vec<Token>>,
    pub cache_capacity: usize,
    /// Stop after this many iterations without a new best validation IC.
    pub patience: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pool_size: 100,
            lambda: 0.1,
            max_episode_len: MAX_EPISODE_LEN,
            cycles_per_iteration: 200,
            iterations: 50,
            quantile_level: 0.85,
            beta: 0.01,
            policy_lr: 0.001,
            discount: 1.0,
            c_puct: 1.0,
            seed: 0,
            horizon: Horizon::Days5,
            update_mode: UpdateMode::PerTrajectory,
            fit: FitConfig::default(),
            embed_dim: 32,
            hidden: 64,
            layers: 4,
            head_hidden: 32,
            vocabulary: None,
            cache_capacity: 256,
            patience: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.into()));
        if self.pool_size == 0 {
            return bad("pool_size must be positive");
        }
        if self.cycles_per_iteration == 0 {
            return bad("cycles_per_iteration must be positive");
        }
        if !(self.quantile_level > 0.0 && self.quantile_level < 1.0) {
            return bad("quantile_level must lie in (0, 1)");
        }
        if !(self.max_episode_len >= 3 && self.max_episode_len <= MAX_EPISODE_LEN) {
            return bad("max_episode_len must lie in [3, 30]");
        }
        if !(self.beta > 0.0 && self.policy_lr >= 0.0 && self.lambda >= 0.0) {
            return bad("beta must be positive; policy_lr and lambda non-negative");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.c_puct >= 0.0 && self.fit.lr > 0.0) {
            return bad("c_puct must be non-negative and fit lr positive");
        }
        if self.embed_dim == 0 || self.hidden == 0 || self.layers == 0 || self.head_hidden == 0 {
            return bad("network sizes must be positive");
        }
        if let Some(v) = &self.vocabulary {
            let vocab = Vocabulary::from_tokens(v);
            if !vocab.capabilities().feature {
                return bad("vocabulary needs at least one feature");
            }
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vocabulary {
        match &self.vocabulary {
            Some(v) => Vocabulary::from_tokens(v),
            None => Vocabulary::full(),
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            vocab_size: self.vocab().len(),
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            layers: self.layers,
            head_hidden: self.head_hidden,
        }
    }

    fn env_config(&self) -> EnvConfig {
        EnvConfig {
            lambda: self.lambda,
            max_episode_len: self.max_episode_len,
            cache_capacity: self.cache_capacity,
        }
    }

    fn mcts_config(&self) -> MctsConfig {
        MctsConfig {
            c_puct: self.c_puct,
            discount: self.discount,
        }
    }
}

/// One row of the run report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    /// Composite IC on the training days; NaN for an empty pool.
    pub train_ic: f64,
    pub valid_ic: f64,
    pub pool_size: usize,
    pub q: f64,
    /// Mean trajectory return over the iteration's buffer.
    pub mean_return: f64,
}

/// Everything needed to continue a run at an iteration boundary.
#[derive(Clone, Debug)]
pub struct RunState {
    /// Completed iterations.
    pub iteration: usize,
    pub pool: AlphaPool,
    pub policy: Policy,
    pub tracker: QuantileTracker,
    pub rng: ChaCha8Rng,
    /// Best validation IC so far; NaN before the first finite value.
    pub best_valid_ic: f64,
    /// Iterations since `best_valid_ic` last improved.
    pub stale: usize,
    pub report: Vec<IterationReport>,
}

impl RunState {
    /// Fresh state: empty pool, seeded policy, tracker at 0.
    pub fn initial(config: &RunConfig, panel: &Panel, split: &SplitSpec) -> Result<RunState, RunError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let policy = Policy::new(config.policy_config(), &mut rng);
        let pool = AlphaPool::new(
            config.pool_size,
            config.fit,
            panel.target(config.horizon),
            split.train.clone(),
        )?;
        Ok(RunState {
            iteration: 0,
            pool,
            policy,
            tracker: QuantileTracker::new(config.quantile_level, config.beta),
            rng,
            best_valid_ic: f64::NAN,
            stale: 0,
            report: Vec::new(),
        })
    }
}

/// Drives a run over a panel. The environment (and its evaluation cache)
/// persists across iterations; the tree and buffer do not.
pub struct Miner<'a> {
    config: RunConfig,
    split: SplitSpec,
    env: AlphaEnv<'a>,
    policy: Policy,
    tracker: QuantileTracker,
    rng: ChaCha8Rng,
    iteration: usize,
    best_valid_ic: f64,
    stale: usize,
    report: Vec<IterationReport>,
}

impl<'a> Miner<'a> {
    pub fn new(config: RunConfig, panel: &'a Panel, split: SplitSpec) -> Result<Miner<'a>, RunError> {
        let state = RunState::initial(&config, panel, &split)?;
        Miner::resume(config, panel, split, state)
    }

    pub fn resume(
        config: RunConfig,
        panel: &'a Panel,
        split: SplitSpec,
        state: RunState,
    ) -> Result<Miner<'a>, RunError> {
        config.validate()?;
        if state.policy.config() != &config.policy_config() {
            return Err(RunError::Config("policy architecture differs from config".into()));
        }
        let env = AlphaEnv::new(panel, state.pool, config.vocab(), config.env_config());
        Ok(Miner {
            config,
            split,
            env,
            policy: state.policy,
            tracker: state.tracker,
            rng: state.rng,
            iteration: state.iteration,
            best_valid_ic: state.best_valid_ic,
            stale: state.stale,
            report: state.report,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn pool(&self) -> &AlphaPool {
        self.env.pool()
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn tracker(&self) -> &QuantileTracker {
        &self.tracker
    }

    pub fn report(&self) -> &[IterationReport] {
        &self.report
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn state(&self) -> RunState {
        RunState {
            iteration: self.iteration,
            pool: self.env.pool().clone(),
            policy: self.policy.clone(),
            tracker: self.tracker,
            rng: self.rng.clone(),
            best_valid_ic: self.best_valid_ic,
            stale: self.stale,
            report: self.report.clone(),
        }
    }

    /// True once the configured iteration count or patience is exhausted.
    pub fn finished(&self) -> bool {
        self.iteration >= self.config.iterations
            || self.config.patience.is_some_and(|p| self.stale >= p)
    }

    /// Search cycles then one policy epoch. Returns the iteration's report row.
    pub fn run_iteration(&mut self) -> Result<IterationReport, RunError> {
        let cycles = self.config.cycles_per_iteration;
        let mut tree = SearchTree::new(self.config.mcts_config());
        let mut buffer = ReplayBuffer::new(cycles);
        for _ in 0..cycles {
            tree.search_cycle(&self.policy, &mut self.env, &mut buffer, &mut self.rng)?;
        }
        let trajectories = buffer.to_vec();
        train_epoch(
            &mut self.policy,
            &trajectories,
            &mut self.tracker,
            self.config.policy_lr,
            self.config.update_mode,
        )?;
        let pool = self.env.pool();
        let ic_on = |days| if pool.is_empty() { f64::NAN } else { pool.composite_ic(days).unwrap_or(f64::NAN) };
        let row = IterationReport {
            iteration: self.iteration,
            train_ic: ic_on(self.split.train.clone()),
            valid_ic: ic_on(self.split.valid.clone()),
            pool_size: pool.len(),
            q: self.tracker.q,
            mean_return: trajectories.iter().map(|t| t.cumulative_reward).sum::<f64>()
                / trajectories.len() as f64,
        };
        if row.valid_ic.is_finite() && !(row.valid_ic <= self.best_valid_ic) {
            self.best_valid_ic = row.valid_ic;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.iteration += 1;
        self.report.push(row);
        Ok(row)
    }

    /// Runs the remaining iterations.
    pub fn run(&mut self) -> Result<(), RunError> {
        while !self.finished() {
            self.run_iteration()?;
        }
        Ok(())
    }

    pub fn best_valid_ic(&self) -> f64 {
        self.best_valid_ic
    }
}

/// Final products of a run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub pool: AlphaPool,
    pub policy: Policy,
    pub report: Vec<IterationReport>,
    pub best_valid_ic: f64,
}

pub fn run(config: &RunConfig, panel: &Panel, split: &SplitSpec) -> Result<RunOutput, RunError> {
    let mut m = Miner::new(config.clone(), panel, split.clone())?;
    m.run()?;
    Ok(RunOutput {
        pool: m.pool().clone(),
        policy: m.policy().clone(),
        report: m.report().to_vec(),
        best_valid_ic: m.best_valid_ic(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub level: f64,
    pub best_valid_ic: f64,
    pub final_train_ic: f64,
}

/// One run per quantile level, all with the config's seed.
pub fn quantile_sweep(
    config: &RunConfig,
    panel: &Panel,
    split: &SplitSpec,
    levels: &[f64],
) -> Result<Vec<SweepRow>, RunError> {
    levels
        .iter()
        .map(|&level| {
            let cfg = RunConfig {
                quantile_level: level,
                ..config.clone()
            };
            let out = run(&cfg, panel, split)?;
            Ok(SweepRow {
                level,
                best_valid_ic: out.best_valid_ic,
                final_train_ic: out.report.last().map_or(f64::NAN, |r| r.train_ic),
            })
        })
        .collect()
}
