//! Score-weighted unsupervised skill discovery on two toy control
//! environments.
//!
//! The crate trains skill-conditioned policies with a constrained
//! representation objective, optionally re-weighting the intrinsic reward
//! with a per-state score in `[0, 1]` produced by an embedding model or a
//! hand-written predicate. Everything runs on CPU, deterministically for a
//! fixed seed, at sizes suited to a laptop.

pub mod agent;
pub mod cli;
pub mod dsd;
pub mod embed;
pub mod envs;
pub mod error;
pub mod eval;
pub mod hier;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod score;
pub mod types;

pub use error::{Error, Result};
