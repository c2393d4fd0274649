//! Plain contextual ridge UCB, conversation-free.
//!
//! `M_t = lr*I + sum x x^T`, `b_t = sum x r`, `th_t = M_t^-1 b_t`, and arms
//! are ranked by `x^T th_t + a_t * ||x||_{M_t^-1}` with
//! `a_t = sqrt(d * ln((1 + t/(lr*d)) / sigma))`.

use crate::error::{Error, Result};
use crate::graph::RelationGraph;
use crate::linalg::{dot, Cholesky, PsdMatrix};
use crate::policy::{argmax_lowest, ArmScore, Policy, PolicyRng, Query};
use crate::slate::ContextSlate;

/// Hyperparameters of [`LinUcb`].
#[derive(Debug, Clone)]
pub struct LinUcbParams {
    pub dim: usize,
    /// Ridge weight, > 0.
    pub ridge: f64,
    /// Confidence level in (0,1).
    pub sigma: f64,
    /// Fixed exploration coefficient; `None` uses the formula.
    pub alpha: Option<f64>,
}

impl LinUcbParams {
    pub fn new(dim: usize) -> Self {
        LinUcbParams {
            dim,
            ridge: 1.0,
            sigma: 0.1,
            alpha: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(self.ridge > 0.0) {
            return Err(Error::Config(format!("ridge must be positive, got {}", self.ridge)));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config(format!(
                "sigma must lie strictly inside (0,1), got {}",
                self.sigma
            )));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0) {
                return Err(Error::Config("alpha override must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Exploration coefficient of the conversation-free learner at observation
/// count `t`.
pub fn linucb_exploration_coefficient(dim: usize, ridge: f64, sigma: f64, t: usize) -> f64 {
    let d = dim as f64;
    (d * (((1.0 + t as f64 / (ridge * d)) / sigma).ln())).sqrt()
}

#[derive(Debug, Clone)]
pub struct LinUcb {
    params: LinUcbParams,
    m: PsdMatrix,
    b: Vec<f64>,
    theta: Vec<f64>,
    chol: Cholesky,
    observations: usize,
    last_scores: Vec<ArmScore>,
}

impl LinUcb {
    pub fn new(params: LinUcbParams) -> Result<Self> {
        params.validate()?;
        let d = params.dim;
        let m = PsdMatrix::scaled_identity(d, params.ridge);
        let chol = m.cholesky()?;
        Ok(LinUcb {
            params,
            m,
            b: vec![0.0; d],
            theta: vec![0.0; d],
            chol,
            observations: 0,
            last_scores: Vec::new(),
        })
    }

    pub fn params(&self) -> &LinUcbParams {
        &self.params
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha.unwrap_or_else(|| {
            linucb_exploration_coefficient(
                self.params.dim,
                self.params.ridge,
                self.params.sigma,
                self.observations,
            )
        })
    }

    pub fn observe(&mut self, x: &[f64], r: f64) -> Result<()> {
        assert_eq!(x.len(), self.params.dim, "context dimension");
        self.m.rank_one_update(x, 1.0);
        for (bi, xi) in self.b.iter_mut().zip(x) {
            *bi += r * xi;
        }
        self.observations += 1;
        self.chol = self.m.cholesky()?;
        self.theta = self.chol.solve(&self.b);
        Ok(())
    }

    pub fn score_slate(&self, slate: &ContextSlate) -> Vec<ArmScore> {
        assert_eq!(slate.dim(), self.params.dim, "slate dimension");
        let alpha = self.alpha();
        slate
            .iter()
            .map(|(arm_id, x)| {
                let width = alpha * self.chol.inverse_quadratic(x).max(0.0).sqrt();
                ArmScore {
                    arm_id,
                    estimate: dot(x, &self.theta),
                    width,
                    arm_width: width,
                    keyterm_width: 0.0,
                }
            })
            .collect()
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &str {
        "linucb"
    }

    fn dim(&self) -> usize {
        self.params.dim
    }

    fn begin_round(&mut self, _t: usize, _slate: &ContextSlate) {}

    fn plan_query(
        &mut self,
        _slate: &ContextSlate,
        _graph: Option<&RelationGraph>,
        _rng: &mut PolicyRng,
    ) -> Option<Query> {
        None
    }

    fn absorb_answer(&mut self, _value: f64) {
        unreachable!("conversation-free learner never plans a query");
    }

    fn select_arm(&mut self, slate: &ContextSlate) -> usize {
        let scores = self.score_slate(slate);
        let pos = argmax_lowest(scores.iter().map(ArmScore::upper_bound))
            .expect("slate is nonempty by construction");
        self.last_scores = scores;
        pos
    }

    fn observe_reward(&mut self, x: &[f64], r: f64) {
        self.observe(x, r).expect("design matrix stays positive definite");
    }

    fn parameter_estimate(&self) -> Vec<f64> {
        self.theta.clone()
    }

    fn last_scores(&self) -> &[ArmScore] {
        &self.last_scores
    }
}
