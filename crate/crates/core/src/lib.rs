//! Formulaic alpha mining over stock panels.
//!
//! Alphas are RPN token sequences ([`expr`]) scored against forward returns
//! ([`panel`]) and combined linearly in a bounded pool ([`pool`]). Mining is a
//! reward-dense MDP ([`env`]) explored by PUCT tree search ([`mcts`]) whose
//! tree and rollout policy is a recurrent network trained to raise an upper
//! quantile of episode returns ([`policy`]). [`pipeline`] alternates the two
//! and [`backtest`] trades the resulting composite signal.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, CSV loading and
//! the command line live in the `alphamine` crate.

#![no_std]

extern crate alloc;

pub mod backtest;
pub mod env;
pub mod expr;
pub mod matrix;
pub mod mcts;
pub mod panel;
pub mod pipeline;
pub mod policy;
pub mod pool;

pub use expr::{Expression, Token};
pub use matrix::AlphaMatrix;
pub use panel::Panel;
