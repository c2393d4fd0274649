//! Conversational contextual bandits.
//!
//! A toolkit for bandit learners that may occasionally *converse*: in
//! addition to picking an arm each round and observing its reward, the
//! learner is granted an occasional budget of questions about *key-terms*,
//! topic-like units each related to many arms through a weighted bipartite
//! graph. Key-term answers propagate to arm-level preference estimates and
//! sharply accelerate early learning.
//!
//! The crate provides:
//!
//! - the ConUCB learner and five baselines (LinUCB, Arm-Con, and three
//!   key-term selection variants) behind one [`policy::Policy`] interface;
//! - an extension with per-arm hidden features ([`hidden`]);
//! - a synthetic environment generator and episode runner ([`sim`]);
//! - an unbiased offline replay evaluator for logged interaction data
//!   ([`replay`]);
//! - a benchmark harness with CSV reports and deterministic reruns
//!   ([`bench`]).
//!
//! Start with the `examples/` directory; each example is a runnable tour of
//! one capability.

// Validation guards are written `!(v > 0.0)` on purpose: the negation
// rejects NaN, which `v <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod graph;
pub mod hidden;
pub mod linalg;
pub mod policy;
pub mod replay;
pub mod schedule;
pub mod sim;
pub mod slate;

pub use error::{Error, Result};
