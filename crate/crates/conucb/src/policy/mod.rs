//! Bandit policies behind one interface.
//!
//! Every learner here follows the same round protocol driven by the episode
//! runner:
//!
//! 1. `begin_round` with the slate;
//! 2. zero or more conversation budget units, each a `plan_query` /
//!    `absorb_answer` pair (the policy may decline with `None`);
//! 3. `select_arm`, then `observe_reward` for the chosen arm.
//!
//! Selection ties always break toward the lowest slate position (arms) or
//! the lowest id (key-terms), which keeps trajectories reproducible and lets
//! tests compare against brute-force oracles exactly.

mod armcon;
mod conucb;
mod linucb;
mod variants;

pub use armcon::{ArmCon, ArmConParams};
pub use conucb::{
    arm_exploration_coefficient, keyterm_exploration_coefficient, ConUcb, ConUcbCore,
    ConUcbParams,
};
pub use linucb::{linucb_exploration_coefficient, LinUcb, LinUcbParams};
pub use variants::{VarLcr, VarMrc, VarRs};

use std::sync::Arc;

use crate::graph::RelationGraph;
use crate::slate::ContextSlate;

/// RNG handed to policies for their internal randomness. A fixed, portable
/// stream type, so identically seeded runs reproduce bit for bit.
pub type PolicyRng = rand_chacha::ChaCha12Rng;

/// A question a policy may spend one conversation budget unit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    /// Ask the user's preference on a key-term (graph id).
    KeyTerm(usize),
    /// Ask the user's rating of one slate arm (slate position).
    ArmRating(usize),
}

/// Per-arm diagnostics from one selection pass.
///
/// `width == arm_width + keyterm_width` by construction; LinUCB-style
/// policies report a zero key-term part.
#[derive(Debug, Clone)]
pub struct ArmScore {
    pub arm_id: usize,
    /// Estimated reward x^T theta.
    pub estimate: f64,
    /// Total confidence width added to the estimate.
    pub width: f64,
    pub arm_width: f64,
    pub keyterm_width: f64,
}

impl ArmScore {
    pub fn upper_bound(&self) -> f64 {
        self.estimate + self.width
    }
}

/// A conversational bandit learner.
///
/// Methods panic on dimension mismatches and on numerical failures of
/// matrices that are positive definite by construction; misconfiguration is
/// rejected earlier, when the policy is built.
pub trait Policy {
    /// Stable label used in reports and CSV rows.
    fn name(&self) -> &str;

    /// Context dimension the policy was built for.
    fn dim(&self) -> usize;

    /// Starts round `t` (1-based). Clears any per-round query bookkeeping.
    fn begin_round(&mut self, t: usize, slate: &ContextSlate);

    /// Feature row per arm id of the full candidate pool. Key-term answers
    /// measure preference along pool-wide weighted averages, so learners
    /// that absorb them record those averages when the table is available
    /// and fall back to slate-restricted ones otherwise. Policies without
    /// key-term machinery ignore the call.
    fn provide_arm_pool(&mut self, _pool: Arc<Vec<Vec<f64>>>) {}

    /// Proposes how to spend one conversation budget unit, or declines.
    /// Policies that query key-terms need `graph`; they decline without it.
    fn plan_query(
        &mut self,
        slate: &ContextSlate,
        graph: Option<&RelationGraph>,
        rng: &mut PolicyRng,
    ) -> Option<Query>;

    /// Feedback value for the query most recently returned by `plan_query`.
    fn absorb_answer(&mut self, value: f64);

    /// Chooses a slate position.
    fn select_arm(&mut self, slate: &ContextSlate) -> usize;

    /// Reward feedback for the context of the chosen arm.
    fn observe_reward(&mut self, x: &[f64], r: f64);

    /// Current point estimate of the user's preference vector.
    fn parameter_estimate(&self) -> Vec<f64>;

    /// Diagnostics for the most recent `select_arm` call, when available.
    fn last_scores(&self) -> &[ArmScore] {
        &[]
    }
}

/// Returns the position of the maximal value, ties to the lowest position.
/// Values must be finite (guaranteed upstream by finite contexts/estimates).
pub(crate) fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        debug_assert!(v.is_finite(), "selection score must be finite, got {v}");
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
