//! Conversational baseline that spends its budget on *arm* ratings.
//!
//! Each budget unit queries the user's rating of the highest-upper-bound
//! slate arm not yet queried this round; the answer enters the underlying
//! ridge estimator as an ordinary observation, so the next pick is made
//! with the refreshed state. Queried arms stay eligible for the final
//! recommendation. Budget beyond the slate size is discarded.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::graph::RelationGraph;
use crate::policy::linucb::{LinUcb, LinUcbParams};
use crate::policy::{ArmScore, Policy, PolicyRng, Query};
use crate::slate::ContextSlate;

/// Hyperparameters of [`ArmCon`]; the estimator is the conversation-free
/// ridge learner's.
pub type ArmConParams = LinUcbParams;

#[derive(Debug, Clone)]
pub struct ArmCon {
    lin: LinUcb,
    queried: BTreeSet<usize>,
    pending: Option<Vec<f64>>,
}

impl ArmCon {
    pub fn new(params: ArmConParams) -> Result<Self> {
        Ok(ArmCon {
            lin: LinUcb::new(params)?,
            queried: BTreeSet::new(),
            pending: None,
        })
    }

    pub fn theta(&self) -> &[f64] {
        self.lin.theta()
    }

    pub fn observations(&self) -> usize {
        self.lin.observations()
    }
}

impl Policy for ArmCon {
    fn name(&self) -> &str {
        "armcon"
    }

    fn dim(&self) -> usize {
        self.lin.dim()
    }

    fn begin_round(&mut self, _t: usize, _slate: &ContextSlate) {
        self.queried.clear();
        self.pending = None;
    }

    fn plan_query(
        &mut self,
        slate: &ContextSlate,
        _graph: Option<&RelationGraph>,
        _rng: &mut PolicyRng,
    ) -> Option<Query> {
        let scores = self.lin.score_slate(slate);
        let mut best: Option<(usize, f64)> = None;
        for (pos, s) in scores.iter().enumerate() {
            if self.queried.contains(&s.arm_id) {
                continue;
            }
            let ub = s.upper_bound();
            match best {
                Some((_, bv)) if ub <= bv => {}
                _ => best = Some((pos, ub)),
            }
        }
        // Every slate arm already queried this round: the rest of the
        // budget is discarded.
        let (pos, _) = best?;
        self.queried.insert(scores[pos].arm_id);
        self.pending = Some(slate.context(pos).to_vec());
        Some(Query::ArmRating(pos))
    }

    fn absorb_answer(&mut self, value: f64) {
        let x = self
            .pending
            .take()
            .expect("absorb_answer must follow a planned query");
        self.lin
            .observe(&x, value)
            .expect("design matrix stays positive definite");
    }

    fn select_arm(&mut self, slate: &ContextSlate) -> usize {
        Policy::select_arm(&mut self.lin, slate)
    }

    fn observe_reward(&mut self, x: &[f64], r: f64) {
        Policy::observe_reward(&mut self.lin, x, r);
    }

    fn parameter_estimate(&self) -> Vec<f64> {
        self.lin.parameter_estimate()
    }

    fn last_scores(&self) -> &[ArmScore] {
        Policy::last_scores(&self.lin)
    }
}
