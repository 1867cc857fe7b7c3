//! Oracles and acceptance criteria shared between test targets.
#![allow(dead_code)]

pub mod criteria;
pub mod textbook;
pub mod tree;
