//! The conversational UCB learner.
//!
//! Two coupled ridge estimators are maintained per user. The key-term level
//! aggregates conversational feedback on pseudo-contexts (weighted averages
//! of related arms' contexts); the arm level aggregates ordinary rewards and
//! is *anchored* to the key-term estimate through its regularizer, so every
//! answered question immediately moves the arm-level prediction. With
//! balance parameter `lambda` in (0,1):
//!
//! ```text
//! M~_t = lt*I + sum x~ x~^T          b~_t = sum x~ r~
//! M_t  = (1-l)*I + l * sum x x^T     b_t  = l * sum x r
//! th~_t = M~_t^-1 b~_t               th_t = M_t^-1 (b_t + (1-l) th~_t)
//! ```
//!
//! Arms are chosen by `estimate + width`, where the width has an arm part
//! `l*a_t*||x||_{M^-1}` and a key-term part `(1-l)*a~_t*||x^T M^-1||_{M~^-1}`.
//! Key-terms are chosen by the uncertainty-reduction rule: maximize
//! `||X M^-1 M~^-1 x~||^2 / (1 + x~^T M~^-1 x~)`, which is equivalent to
//! greedily minimizing the summed posterior variance of the slate's
//! predictions after the simulated rank-1 update of `M~`.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::RelationGraph;
use crate::linalg::{dot, Cholesky, PsdMatrix};
use crate::policy::{argmax_lowest, ArmScore, Policy, PolicyRng, Query};
use crate::slate::ContextSlate;

/// Arm-level exploration coefficient at arm-observation count `t`:
/// sqrt(d * ln((1 + l*t / ((1-l)*d)) / sigma)).
pub fn arm_exploration_coefficient(dim: usize, lambda: f64, sigma: f64, t: usize) -> f64 {
    let d = dim as f64;
    (d * (((1.0 + lambda * t as f64 / ((1.0 - lambda) * d)) / sigma).ln())).sqrt()
}

/// Key-term-level exploration coefficient after `conversations` answers:
/// sqrt(2 * (d*ln6 + ln(2*conversations/sigma))) + 2*sqrt(lt)*||th~*||.
/// Before any conversation only the additive constant applies.
pub fn keyterm_exploration_coefficient(
    dim: usize,
    lambda_tilde: f64,
    sigma: f64,
    conversations: usize,
    theta_tilde_star_norm: f64,
) -> f64 {
    let base = 2.0 * lambda_tilde.sqrt() * theta_tilde_star_norm;
    if conversations == 0 {
        return base;
    }
    let d = dim as f64;
    base + (2.0 * (d * 6.0f64.ln() + (2.0 * conversations as f64 / sigma).ln())).sqrt()
}

/// Hyperparameters of [`ConUcbCore`].
#[derive(Debug, Clone)]
pub struct ConUcbParams {
    pub dim: usize,
    /// Balance between arm-level data and the key-term anchor, in (0,1)
    /// exclusive: the exploration coefficients are undefined at 0 and 1.
    pub lambda: f64,
    /// Ridge weight of the key-term estimator, > 0.
    pub lambda_tilde: f64,
    /// Confidence level in (0,1): widths hold with probability 1 - sigma.
    pub sigma: f64,
    /// Plug-in for the unknown norm of the true key-term-level preference.
    /// Unit scale by default; simulations may pass the exact value.
    pub theta_tilde_star_norm: f64,
    /// Fixed arm-level exploration coefficient; `None` uses the formula.
    pub alpha: Option<f64>,
    /// Fixed key-term-level exploration coefficient; `None` uses the formula.
    pub alpha_tilde: Option<f64>,
}

impl ConUcbParams {
    pub fn new(dim: usize) -> Self {
        ConUcbParams {
            dim,
            lambda: 0.5,
            lambda_tilde: 1.0,
            sigma: 0.1,
            theta_tilde_star_norm: 1.0,
            alpha: None,
            alpha_tilde: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!(
                "lambda must lie strictly inside (0,1), got {}",
                self.lambda
            )));
        }
        if !(self.lambda_tilde > 0.0) {
            return Err(Error::Config(format!(
                "lambda_tilde must be positive, got {}",
                self.lambda_tilde
            )));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config(format!(
                "sigma must lie strictly inside (0,1), got {}",
                self.sigma
            )));
        }
        if !(self.theta_tilde_star_norm >= 0.0) {
            return Err(Error::Config("theta_tilde_star_norm must be nonnegative".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("alpha_tilde", self.alpha_tilde)] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return Err(Error::Config(format!("{name} override must be nonnegative")));
                }
            }
        }
        Ok(())
    }
}

/// The two-level estimator and its selection rules, kept eagerly refreshed:
/// after construction and after every observation, cached factors and
/// parameter vectors match the current matrices exactly.
#[derive(Debug, Clone)]
pub struct ConUcbCore {
    params: ConUcbParams,
    m: PsdMatrix,
    b: Vec<f64>,
    mt: PsdMatrix,
    bt: Vec<f64>,
    theta: Vec<f64>,
    theta_tilde: Vec<f64>,
    chol_m: Cholesky,
    chol_mt: Cholesky,
    arm_obs: usize,
    conversations: usize,
}

impl ConUcbCore {
    pub fn new(params: ConUcbParams) -> Result<Self> {
        params.validate()?;
        let d = params.dim;
        let m = PsdMatrix::scaled_identity(d, 1.0 - params.lambda);
        let mt = PsdMatrix::scaled_identity(d, params.lambda_tilde);
        let chol_m = m.cholesky()?;
        let chol_mt = mt.cholesky()?;
        Ok(ConUcbCore {
            params,
            m,
            b: vec![0.0; d],
            mt,
            bt: vec![0.0; d],
            theta: vec![0.0; d],
            theta_tilde: vec![0.0; d],
            chol_m,
            chol_mt,
            arm_obs: 0,
            conversations: 0,
        })
    }

    pub fn params(&self) -> &ConUcbParams {
        &self.params
    }

    /// Arm-level estimate th_t (exact for the current matrices).
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Key-term-level estimate th~_t.
    pub fn theta_tilde(&self) -> &[f64] {
        &self.theta_tilde
    }

    pub fn arm_observations(&self) -> usize {
        self.arm_obs
    }

    pub fn conversation_count(&self) -> usize {
        self.conversations
    }

    /// Solves both levels from the current matrices and re-caches factors.
    /// Runs automatically after every observation; exposed for tests that
    /// check the closed forms directly.
    pub fn refresh(&mut self) -> Result<()> {
        self.chol_mt = self.mt.cholesky()?;
        self.theta_tilde = self.chol_mt.solve(&self.bt);
        self.chol_m = self.m.cholesky()?;
        let anchor = 1.0 - self.params.lambda;
        let rhs: Vec<f64> = self
            .b
            .iter()
            .zip(&self.theta_tilde)
            .map(|(bi, ti)| bi + anchor * ti)
            .collect();
        self.theta = self.chol_m.solve(&rhs);
        Ok(())
    }

    /// Records an answered key-term question: M~ += x~ x~^T, b~ += r~ x~.
    pub fn observe_keyterm(&mut self, pseudo_context: &[f64], feedback: f64) -> Result<()> {
        assert_eq!(pseudo_context.len(), self.params.dim, "pseudo-context dimension");
        self.mt.rank_one_update(pseudo_context, 1.0);
        for (bi, xi) in self.bt.iter_mut().zip(pseudo_context) {
            *bi += feedback * xi;
        }
        self.conversations += 1;
        self.refresh()
    }

    /// Records an arm reward: M += l * x x^T, b += l * r * x.
    pub fn observe_arm(&mut self, context: &[f64], reward: f64) -> Result<()> {
        assert_eq!(context.len(), self.params.dim, "context dimension");
        let l = self.params.lambda;
        self.m.rank_one_update(context, l);
        for (bi, xi) in self.b.iter_mut().zip(context) {
            *bi += l * reward * xi;
        }
        self.arm_obs += 1;
        self.refresh()
    }

    /// Current arm-level exploration coefficient.
    pub fn alpha(&self) -> f64 {
        self.params.alpha.unwrap_or_else(|| {
            arm_exploration_coefficient(
                self.params.dim,
                self.params.lambda,
                self.params.sigma,
                self.arm_obs,
            )
        })
    }

    /// Current key-term-level exploration coefficient.
    pub fn alpha_tilde(&self) -> f64 {
        self.params.alpha_tilde.unwrap_or_else(|| {
            keyterm_exploration_coefficient(
                self.params.dim,
                self.params.lambda_tilde,
                self.params.sigma,
                self.conversations,
                self.params.theta_tilde_star_norm,
            )
        })
    }

    /// Estimate and decomposed width for every slate arm.
    pub fn score_slate(&self, slate: &ContextSlate) -> Vec<ArmScore> {
        assert_eq!(slate.dim(), self.params.dim, "slate dimension");
        let lambda = self.params.lambda;
        let alpha = self.alpha();
        let alpha_tilde = self.alpha_tilde();
        slate
            .iter()
            .map(|(arm_id, x)| {
                let y = self.chol_m.solve(x);
                let arm_width = lambda * alpha * dot(x, &y).max(0.0).sqrt();
                let keyterm_width = (1.0 - lambda)
                    * alpha_tilde
                    * self.chol_mt.inverse_quadratic(&y).max(0.0).sqrt();
                ArmScore {
                    arm_id,
                    estimate: dot(x, &self.theta),
                    width: arm_width + keyterm_width,
                    arm_width,
                    keyterm_width,
                }
            })
            .collect()
    }

    /// Picks the slate position with maximal `estimate + width`, ties to the
    /// lowest position. Also returns all scores for diagnostics.
    pub fn select_arm(&self, slate: &ContextSlate) -> (usize, Vec<ArmScore>) {
        let scores = self.score_slate(slate);
        let pos = argmax_lowest(scores.iter().map(ArmScore::upper_bound))
            .expect("slate is nonempty by construction");
        (pos, scores)
    }

    /// `M^-1 x` for every slate context; the shared left factor of both the
    /// key-term scores and the width computations.
    pub(crate) fn slate_inverse_projections(&self, slate: &ContextSlate) -> Vec<Vec<f64>> {
        (0..slate.len())
            .map(|pos| self.chol_m.solve(slate.context(pos)))
            .collect()
    }

    pub(crate) fn mt_solve(&self, v: &[f64]) -> Vec<f64> {
        self.chol_mt.solve(v)
    }

    pub(crate) fn mt_inverse_quadratic(&self, v: &[f64]) -> f64 {
        self.chol_mt.inverse_quadratic(v)
    }

    #[cfg(test)]
    pub(crate) fn arm_matrix_entry(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    #[cfg(test)]
    pub(crate) fn keyterm_matrix_entry(&self, i: usize, j: usize) -> f64 {
        self.mt.get(i, j)
    }

    /// Uncertainty-reduction scores for explicit pseudo-contexts:
    /// `||X M^-1 M~^-1 x~||^2 / (1 + x~^T M~^-1 x~)` per candidate.
    pub fn keyterm_scores(&self, slate: &ContextSlate, pseudo_contexts: &[Vec<f64>]) -> Vec<f64> {
        let projections = self.slate_inverse_projections(slate);
        pseudo_contexts
            .iter()
            .map(|xt| {
                let u = self.chol_mt.solve(xt);
                let denom = 1.0 + dot(xt, &u);
                let num: f64 = projections.iter().map(|y| dot(y, &u).powi(2)).sum();
                num / denom
            })
            .collect()
    }

    /// Applies the uncertainty-reduction rule over the slate's key-term
    /// candidates outside `already_asked`; ties break to the lowest id.
    /// Returns the chosen id with its slate-restricted pseudo-context.
    pub fn select_keyterm(
        &self,
        slate: &ContextSlate,
        graph: &RelationGraph,
        already_asked: &BTreeSet<usize>,
    ) -> Result<(usize, Vec<f64>)> {
        let mut candidates = Vec::new();
        let mut pseudo = Vec::new();
        for k in graph.slate_candidates(slate) {
            if already_asked.contains(&k) {
                continue;
            }
            let xt = graph
                .slate_key_term_context(k, slate)
                .expect("candidate key-terms have slate-incident arms");
            candidates.push(k);
            pseudo.push(xt);
        }
        if candidates.is_empty() {
            return Err(Error::Usage(
                "no key-term candidate outside the already-asked set".into(),
            ));
        }
        let scores = self.keyterm_scores(slate, &pseudo);
        let best = argmax_lowest(scores.iter().copied()).expect("candidate list is nonempty");
        Ok((candidates[best], pseudo.swap_remove(best)))
    }
}

/// [`ConUcbCore`] wired into the [`Policy`] round protocol.
///
/// Key-term answers are regressed on the pool-wide pseudo-context when the
/// runner provides the arm pool (the answer's own direction); candidate
/// scoring stays on slate-restricted pseudo-contexts either way.
#[derive(Debug, Clone)]
pub struct ConUcb {
    core: ConUcbCore,
    asked: BTreeSet<usize>,
    pending: Option<Vec<f64>>,
    pool: Option<Arc<Vec<Vec<f64>>>>,
    last_scores: Vec<ArmScore>,
}

impl ConUcb {
    pub fn new(params: ConUcbParams) -> Result<Self> {
        Ok(ConUcb {
            core: ConUcbCore::new(params)?,
            asked: BTreeSet::new(),
            pending: None,
            pool: None,
            last_scores: Vec::new(),
        })
    }

    pub fn core(&self) -> &ConUcbCore {
        &self.core
    }
}

impl Policy for ConUcb {
    fn name(&self) -> &str {
        "conucb"
    }

    fn dim(&self) -> usize {
        self.core.params().dim
    }

    fn begin_round(&mut self, _t: usize, _slate: &ContextSlate) {
        self.asked.clear();
        self.pending = None;
    }

    fn provide_arm_pool(&mut self, pool: Arc<Vec<Vec<f64>>>) {
        self.pool = Some(pool);
    }

    fn plan_query(
        &mut self,
        slate: &ContextSlate,
        graph: Option<&RelationGraph>,
        _rng: &mut PolicyRng,
    ) -> Option<Query> {
        let graph = graph?;
        let (k, pseudo) = self.core.select_keyterm(slate, graph, &self.asked).ok()?;
        self.asked.insert(k);
        self.pending = Some(match &self.pool {
            Some(pool) => graph
                .key_term_context(k, pool)
                .expect("arm pool matches the graph's arm count and dimension"),
            None => pseudo,
        });
        Some(Query::KeyTerm(k))
    }

    fn absorb_answer(&mut self, value: f64) {
        let pseudo = self
            .pending
            .take()
            .expect("absorb_answer must follow a planned query");
        self.core
            .observe_keyterm(&pseudo, value)
            .expect("key-term design matrix stays positive definite");
    }

    fn select_arm(&mut self, slate: &ContextSlate) -> usize {
        let (pos, scores) = self.core.select_arm(slate);
        self.last_scores = scores;
        pos
    }

    fn observe_reward(&mut self, x: &[f64], r: f64) {
        self.core
            .observe_arm(x, r)
            .expect("arm design matrix stays positive definite");
    }

    fn parameter_estimate(&self) -> Vec<f64> {
        self.core.theta().to_vec()
    }

    fn last_scores(&self) -> &[ArmScore] {
        &self.last_scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn params(dim: usize) -> ConUcbParams {
        ConUcbParams::new(dim)
    }

    fn random_unit(rng: &mut StdRng, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = crate::linalg::norm2(&v);
            if n > 1e-3 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// History of raw observations, for from-scratch reassembly.
    struct History {
        arm: Vec<(Vec<f64>, f64)>,
        keyterm: Vec<(Vec<f64>, f64)>,
    }

    fn random_history(rng: &mut StdRng, d: usize, max_each: usize) -> History {
        let n_arm = rng.random_range(0..=max_each);
        let n_kt = rng.random_range(0..=max_each);
        History {
            arm: (0..n_arm)
                .map(|_| (random_unit(rng, d), rng.random_range(-1.0..1.0)))
                .collect(),
            keyterm: (0..n_kt)
                .map(|_| (random_unit(rng, d), rng.random_range(-1.0..1.0)))
                .collect(),
        }
    }

    /// Feeds a history in a random interleaving.
    fn core_with_history(rng: &mut StdRng, p: ConUcbParams, h: &History) -> ConUcbCore {
        let mut core = ConUcbCore::new(p).unwrap();
        let mut arm = h.arm.iter();
        let mut kt = h.keyterm.iter();
        let (mut na, mut nk) = (h.arm.len(), h.keyterm.len());
        while na + nk > 0 {
            let pick_arm = na > 0 && (nk == 0 || rng.random_range(0..(na + nk)) < na);
            if pick_arm {
                let (x, r) = arm.next().unwrap();
                core.observe_arm(x, *r).unwrap();
                na -= 1;
            } else {
                let (x, r) = kt.next().unwrap();
                core.observe_keyterm(x, *r).unwrap();
                nk -= 1;
            }
        }
        core
    }

    /// Normal-equations oracle: assembles both design systems from scratch
    /// with nalgebra and solves by LU.
    fn oracle_thetas(p: &ConUcbParams, h: &History) -> (Vec<f64>, Vec<f64>) {
        let d = p.dim;
        let mut mt = DMatrix::identity(d, d) * p.lambda_tilde;
        let mut bt = DVector::zeros(d);
        for (x, r) in &h.keyterm {
            let xv = DVector::from_column_slice(x);
            mt += &xv * xv.transpose();
            bt += xv * *r;
        }
        let theta_tilde = mt.lu().solve(&bt).unwrap();

        let mut m = DMatrix::identity(d, d) * (1.0 - p.lambda);
        let mut b = DVector::zeros(d);
        for (x, r) in &h.arm {
            let xv = DVector::from_column_slice(x);
            m += p.lambda * &xv * xv.transpose();
            b += p.lambda * xv * *r;
        }
        let rhs = &b + (1.0 - p.lambda) * &theta_tilde;
        let theta = m.lu().solve(&rhs).unwrap();
        (theta_tilde.as_slice().to_vec(), theta.as_slice().to_vec())
    }

    fn assert_close(a: &[f64], b: &[f64], rel: f64) {
        let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= rel * scale, "{x} vs {y} (rel {rel})");
        }
    }

    #[test]
    fn fresh_state_has_zero_estimates() {
        let core = ConUcbCore::new(params(4)).unwrap();
        assert_eq!(core.theta(), &[0.0; 4]);
        assert_eq!(core.theta_tilde(), &[0.0; 4]);
    }

    #[test]
    fn endpoint_lambdas_rejected() {
        for lambda in [0.0, 1.0] {
            let mut p = params(3);
            p.lambda = lambda;
            assert!(ConUcbCore::new(p).is_err());
        }
    }

    #[test]
    fn single_arm_observation_matches_unit_ridge() {
        // With lambda = 0.5 and no key-term data the arm estimate reduces to
        // a plain ridge regression with coefficient (1-l)/l = 1.
        let mut rng = StdRng::seed_from_u64(5);
        let d = 4;
        let mut core = ConUcbCore::new(params(d)).unwrap();
        let x = random_unit(&mut rng, d);
        core.observe_arm(&x, 0.7).unwrap();

        let xv = DVector::from_column_slice(&x);
        let ridge = (DMatrix::identity(d, d) + &xv * xv.transpose())
            .lu()
            .solve(&(xv * 0.7))
            .unwrap();
        assert_close(core.theta(), ridge.as_slice(), 1e-12);
    }

    #[test]
    fn keyterm_observation_closed_form_2x2() {
        let mut core = ConUcbCore::new(params(2)).unwrap();
        core.observe_keyterm(&[1.0, 0.0], 1.0).unwrap();
        assert_close(core.theta_tilde(), &[0.5, 0.0], 1e-12);

        let mut zero_reward = ConUcbCore::new(params(2)).unwrap();
        zero_reward.observe_keyterm(&[1.0, 0.0], 0.0).unwrap();
        assert_eq!(zero_reward.theta_tilde(), &[0.0, 0.0]);
        // M~ still moved even though b~ did not.
        assert_eq!(zero_reward.mt.get(0, 0), core.mt.get(0, 0));
    }

    #[test]
    fn repeated_keyterm_observation_is_linear() {
        let x = [0.6, 0.8];
        let mut twice = ConUcbCore::new(params(2)).unwrap();
        twice.observe_keyterm(&x, 0.3).unwrap();
        twice.observe_keyterm(&x, 0.3).unwrap();

        let mut weighted = ConUcbCore::new(params(2)).unwrap();
        weighted.mt.rank_one_update(&x, 2.0);
        for (bi, xi) in weighted.bt.iter_mut().zip(&x) {
            *bi += 2.0 * 0.3 * xi;
        }
        weighted.refresh().unwrap();
        assert_close(twice.theta_tilde(), weighted.theta_tilde(), 1e-12);
    }

    #[test]
    fn refresh_matches_normal_equations_oracle() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..30 {
            let d = rng.random_range(1..8usize);
            let mut p = params(d);
            p.lambda = rng.random_range(0.1..0.9);
            p.lambda_tilde = rng.random_range(0.2..3.0);
            let h = random_history(&mut rng, d, 30);
            let core = core_with_history(&mut rng, p.clone(), &h);
            let (tt, t) = oracle_thetas(&p, &h);
            assert_close(core.theta_tilde(), &tt, 1e-8);
            assert_close(core.theta(), &t, 1e-8);
        }
    }

    #[test]
    fn theta_tilde_minimizes_keyterm_objective() {
        // Perturbation oracle: the closed-form solution must beat 100 random
        // perturbations on the regularized key-term least squares.
        let mut rng = StdRng::seed_from_u64(29);
        let d = 5;
        let p = params(d);
        let h = random_history(&mut rng, d, 25);
        let core = core_with_history(&mut rng, p.clone(), &h);

        let objective = |theta: &[f64]| -> f64 {
            let fit: f64 = h
                .keyterm
                .iter()
                .map(|(x, r)| (dot(x, theta) - r).powi(2))
                .sum();
            fit + p.lambda_tilde * dot(theta, theta)
        };
        let at_solution = objective(core.theta_tilde());
        for _ in 0..100 {
            let delta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.1..0.1)).collect();
            let perturbed: Vec<f64> = core
                .theta_tilde()
                .iter()
                .zip(&delta)
                .map(|(t, dd)| t + dd)
                .collect();
            assert!(objective(&perturbed) >= at_solution - 1e-12);
        }
    }

    #[test]
    fn arm_coefficient_plug_in_values() {
        // t=0, d=50, sigma=0.1: sqrt(50 * ln 10).
        let got = arm_exploration_coefficient(50, 0.5, 0.1, 0);
        assert!((got - (50.0 * 10.0f64.ln()).sqrt()).abs() < 1e-12);
        // sigma near 1 at t=0 collapses the width to ~0.
        assert!(arm_exploration_coefficient(50, 0.5, 1.0 - 1e-12, 0) < 1e-5);
    }

    #[test]
    fn arm_coefficient_monotone_in_t() {
        let mut last = 0.0;
        for t in 0..200 {
            let a = arm_exploration_coefficient(10, 0.3, 0.05, t);
            assert!(a >= last);
            last = a;
        }
    }

    #[test]
    fn keyterm_coefficient_plug_in_values() {
        // b=1, d=1, sigma=2/e, norm 0: sqrt(2 (ln 6 + 1)).
        let got = keyterm_exploration_coefficient(1, 1.0, 2.0 / std::f64::consts::E, 1, 0.0);
        assert!((got - (2.0 * (6.0f64.ln() + 1.0)).sqrt()).abs() < 1e-12);

        // The norm enters as an additive 2*sqrt(lt) term.
        let with_norm = keyterm_exploration_coefficient(3, 4.0, 0.1, 2, 1.0);
        let without = keyterm_exploration_coefficient(3, 4.0, 0.1, 2, 0.0);
        assert!((with_norm - without - 2.0 * 2.0).abs() < 1e-12);

        // Nondecreasing in the conversation count.
        let mut last = 0.0;
        for b in 0..50 {
            let a = keyterm_exploration_coefficient(4, 1.0, 0.1, b, 1.0);
            assert!(a >= last);
            last = a;
        }
    }

    fn slate_from_unit_contexts(contexts: Vec<Vec<f64>>) -> ContextSlate {
        let n = contexts.len();
        ContextSlate::with_raw_contexts(1, (0..n).collect(), contexts).unwrap()
    }

    #[test]
    fn single_arm_slate_is_selected() {
        let core = ConUcbCore::new(params(2)).unwrap();
        let slate = slate_from_unit_contexts(vec![vec![1.0, 0.0]]);
        assert_eq!(core.select_arm(&slate).0, 0);
    }

    #[test]
    fn identical_contexts_tie_break_to_first_position() {
        let core = ConUcbCore::new(params(2)).unwrap();
        let slate = slate_from_unit_contexts(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(core.select_arm(&slate).0, 0);
    }

    #[test]
    fn arm_selection_matches_from_scratch_oracle() {
        // Rebuild every quantity with explicit inverses from the raw history
        // and compare the chosen arm.
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..25 {
            let d = rng.random_range(2..6usize);
            let mut p = params(d);
            p.lambda = rng.random_range(0.2..0.8);
            let h = random_history(&mut rng, d, 15);
            let core = core_with_history(&mut rng, p.clone(), &h);
            let slate =
                slate_from_unit_contexts((0..6).map(|_| random_unit(&mut rng, d)).collect());

            let (_, t) = oracle_thetas(&p, &h);
            let mut m = DMatrix::identity(d, d) * (1.0 - p.lambda);
            for (x, _) in &h.arm {
                let xv = DVector::from_column_slice(x);
                m += p.lambda * &xv * xv.transpose();
            }
            let mut mt = DMatrix::identity(d, d) * p.lambda_tilde;
            for (x, _) in &h.keyterm {
                let xv = DVector::from_column_slice(x);
                mt += &xv * xv.transpose();
            }
            let m_inv = m.try_inverse().unwrap();
            let mt_inv = mt.try_inverse().unwrap();
            let alpha = arm_exploration_coefficient(d, p.lambda, p.sigma, h.arm.len());
            let alpha_tilde = keyterm_exploration_coefficient(
                d,
                p.lambda_tilde,
                p.sigma,
                h.keyterm.len(),
                p.theta_tilde_star_norm,
            );
            let mut best = (0usize, f64::NEG_INFINITY);
            for pos in 0..slate.len() {
                let x = DVector::from_column_slice(slate.context(pos));
                let y = &m_inv * &x;
                let est = x.dot(&DVector::from_column_slice(&t));
                let score = est
                    + p.lambda * alpha * (x.dot(&y)).sqrt()
                    + (1.0 - p.lambda) * alpha_tilde * (y.dot(&(&mt_inv * &y))).sqrt();
                if score > best.1 {
                    best = (pos, score);
                }
            }
            assert_eq!(core.select_arm(&slate).0, best.0);
        }
    }

    #[test]
    fn keyterm_rule_hand_instance() {
        // Fresh state, one slate context (1,0): the aligned candidate wins.
        let core = ConUcbCore::new(params(2)).unwrap();
        let slate = slate_from_unit_contexts(vec![vec![1.0, 0.0]]);
        let scores =
            core.keyterm_scores(&slate, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let l = 0.5f64;
        let lt = 1.0f64;
        let expected0 = (1.0 / ((1.0 - l) * lt)).powi(2) / (1.0 + 1.0 / lt);
        assert!((scores[0] - expected0).abs() < 1e-12);
        assert_eq!(scores[1], 0.0);
        assert!(scores[0] > scores[1]);
    }

    #[test]
    fn orthogonal_candidates_tie_break_to_lowest() {
        let core = ConUcbCore::new(params(3)).unwrap();
        let slate = slate_from_unit_contexts(vec![vec![1.0, 0.0, 0.0]]);
        // Both candidates orthogonal to the slate projection: scores are 0.
        let scores = core.keyterm_scores(&slate, &[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(scores, vec![0.0, 0.0]);
        assert_eq!(argmax_lowest(scores.into_iter()), Some(0));
    }

    #[test]
    fn keyterm_rule_matches_trace_objective() {
        // The fast score must pick the same candidate as the exhaustive
        // trace objective tr(X M^-1 (M~ + x~ x~^T)^-1 M^-1 X^T), minimized
        // by explicit inversion.
        let mut rng = StdRng::seed_from_u64(59);
        for _ in 0..25 {
            let d = rng.random_range(2..6usize);
            let mut p = params(d);
            p.lambda = rng.random_range(0.2..0.8);
            p.lambda_tilde = rng.random_range(0.5..2.0);
            let h = random_history(&mut rng, d, 10);
            let core = core_with_history(&mut rng, p.clone(), &h);
            let slate =
                slate_from_unit_contexts((0..5).map(|_| random_unit(&mut rng, d)).collect());
            let cands: Vec<Vec<f64>> = (0..8).map(|_| random_unit(&mut rng, d)).collect();

            let fast = argmax_lowest(core.keyterm_scores(&slate, &cands)).unwrap();

            let mut m = DMatrix::identity(d, d) * (1.0 - p.lambda);
            for (x, _) in &h.arm {
                let xv = DVector::from_column_slice(x);
                m += p.lambda * &xv * xv.transpose();
            }
            let mut mt = DMatrix::identity(d, d) * p.lambda_tilde;
            for (x, _) in &h.keyterm {
                let xv = DVector::from_column_slice(x);
                mt += &xv * xv.transpose();
            }
            let m_inv = m.try_inverse().unwrap();
            let mut xm = DMatrix::zeros(slate.len(), d);
            for pos in 0..slate.len() {
                let row = m_inv.transpose() * DVector::from_column_slice(slate.context(pos));
                xm.set_row(pos, &row.transpose());
            }
            let mut best = (0usize, f64::INFINITY);
            for (i, c) in cands.iter().enumerate() {
                let cv = DVector::from_column_slice(c);
                let updated = (&mt + &cv * cv.transpose()).try_inverse().unwrap();
                let trace = (&xm * updated * xm.transpose()).trace();
                if trace < best.1 {
                    best = (i, trace);
                }
            }
            assert_eq!(fast, best.0, "fast rule and trace objective disagree");
        }
    }

    #[test]
    fn keyterm_width_obeys_projection_bound() {
        // Key-term width part is bounded by the arm norm scaled by
        // 1/sqrt(lt*(1-l)) (a Cauchy-Schwarz consequence).
        let mut rng = StdRng::seed_from_u64(67);
        let d = 5;
        let mut p = params(d);
        p.lambda = 0.4;
        p.lambda_tilde = 2.0;
        let h = random_history(&mut rng, d, 20);
        let core = core_with_history(&mut rng, p.clone(), &h);
        let slate = slate_from_unit_contexts((0..8).map(|_| random_unit(&mut rng, d)).collect());
        let alpha_tilde = core.alpha_tilde();
        for score in core.score_slate(&slate) {
            let arm_norm = score.arm_width / (p.lambda * core.alpha());
            let bound = (1.0 - p.lambda) * alpha_tilde * arm_norm
                / (p.lambda_tilde * (1.0 - p.lambda)).sqrt();
            assert!(score.keyterm_width <= bound + 1e-10);
        }
    }

    #[test]
    fn scaling_rewards_and_coefficients_preserves_selection() {
        // Degree-1 homogeneity: doubling rewards and both exploration
        // coefficients rescales every score by exactly 2.
        let mut rng = StdRng::seed_from_u64(71);
        let d = 4;
        let h = random_history(&mut rng, d, 12);

        let mut base_params = params(d);
        base_params.alpha = Some(0.8);
        base_params.alpha_tilde = Some(0.6);
        let base = core_with_history(&mut rng, base_params.clone(), &h);

        let mut scaled_params = base_params;
        scaled_params.alpha = Some(1.6);
        scaled_params.alpha_tilde = Some(1.2);
        let scaled_history = History {
            arm: h.arm.iter().map(|(x, r)| (x.clone(), 2.0 * r)).collect(),
            keyterm: h.keyterm.iter().map(|(x, r)| (x.clone(), 2.0 * r)).collect(),
        };
        let scaled = core_with_history(&mut rng, scaled_params, &scaled_history);

        let slate = slate_from_unit_contexts((0..6).map(|_| random_unit(&mut rng, d)).collect());
        assert_eq!(base.select_arm(&slate).0, scaled.select_arm(&slate).0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn prop_estimator_consistency(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let d = rng.random_range(1..6usize);
            let mut p = params(d);
            p.lambda = rng.random_range(0.05..0.95);
            p.lambda_tilde = rng.random_range(0.1..4.0);
            let h = random_history(&mut rng, d, 20);
            let core = core_with_history(&mut rng, p.clone(), &h);
            let (tt, t) = oracle_thetas(&p, &h);
            let scale_t = 1.0 + t.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let scale_tt = 1.0 + tt.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for i in 0..d {
                prop_assert!((core.theta()[i] - t[i]).abs() <= 1e-8 * scale_t);
                prop_assert!((core.theta_tilde()[i] - tt[i]).abs() <= 1e-8 * scale_tt);
            }
        }
    }
}
