//! Black-box membership-inference auditing for synthetic tabular data.
//!
//! Given only a released synthetic table and auxiliary real data, the attack
//! simulates the release process with shadow generators, trains per-column
//! attribute predictors on each synthetic table, turns their reconstruction
//! errors on known members and non-members into error profiles, and fits a
//! boosted-tree classifier that scores challenge records for membership.

pub mod attack;
pub mod benchmark;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gbdt;
pub mod generators;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod shadow;
pub mod tabular;

pub use error::{Error, Result};
