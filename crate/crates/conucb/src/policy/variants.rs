//! Ablation baselines that share the anchored two-level estimator but swap
//! in simpler key-term selection rules.
//!
//! - `VarRs` draws a candidate uniformly from the policy's RNG stream.
//! - `VarMrc` maximizes the related confidence of the current slate:
//!   `sum_a w^_a,k * a~_t * ||x_a^T M^-1||_{M~^-1}`.
//! - `VarLcr` maximizes the confidence reduction a simulated answer would
//!   bring: `sum_a w^_a,k * (C_a - C_a^k)`, with `C_a^k` computed from the
//!   rank-1-updated key-term matrix (a~_t held fixed inside the
//!   comparison; only the norm changes).
//!
//! Weights `w^` are the relation weights renormalized over the slate.
//! Updates, arm selection, and widths are the anchored learner's.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;

use crate::error::Result;
use crate::graph::RelationGraph;
use crate::linalg::{dot, rank_one_updated_quadratic};
use crate::policy::conucb::{ConUcbCore, ConUcbParams};
use crate::policy::{argmax_lowest, ArmScore, Policy, PolicyRng, Query};
use crate::slate::ContextSlate;

/// A key-term candidate prepared for scoring: its slate-restricted
/// pseudo-context and renormalized weights over slate positions.
#[derive(Debug, Clone)]
pub(crate) struct WeightedCandidate {
    pub id: usize,
    pub pseudo: Vec<f64>,
    pub weights: Vec<(usize, f64)>,
}

/// Slate-incident key-terms outside `asked`, ascending by id.
fn collect_candidates(
    slate: &ContextSlate,
    graph: &RelationGraph,
    asked: &BTreeSet<usize>,
) -> Vec<WeightedCandidate> {
    graph
        .slate_candidates(slate)
        .into_iter()
        .filter(|k| !asked.contains(k))
        .map(|k| WeightedCandidate {
            id: k,
            pseudo: graph
                .slate_key_term_context(k, slate)
                .expect("candidate key-terms have slate-incident arms"),
            weights: graph
                .slate_weights(k, slate)
                .expect("candidate key-terms have slate-incident arms"),
        })
        .collect()
}

/// Related-confidence scores, one per candidate.
pub(crate) fn mrc_scores(
    core: &ConUcbCore,
    slate: &ContextSlate,
    candidates: &[WeightedCandidate],
) -> Vec<f64> {
    let alpha_tilde = core.alpha_tilde();
    let projections = core.slate_inverse_projections(slate);
    let norms: Vec<f64> = projections
        .iter()
        .map(|y| core.mt_inverse_quadratic(y).max(0.0).sqrt())
        .collect();
    candidates
        .iter()
        .map(|c| {
            c.weights
                .iter()
                .map(|&(pos, w)| w * alpha_tilde * norms[pos])
                .sum()
        })
        .collect()
}

/// Confidence-reduction scores, one per candidate.
pub(crate) fn lcr_scores(
    core: &ConUcbCore,
    slate: &ContextSlate,
    candidates: &[WeightedCandidate],
) -> Vec<f64> {
    let lambda = core.params().lambda;
    let alpha_tilde = core.alpha_tilde();
    let projections = core.slate_inverse_projections(slate);
    let q_yy: Vec<f64> = projections
        .iter()
        .map(|y| core.mt_inverse_quadratic(y).max(0.0))
        .collect();
    candidates
        .iter()
        .map(|c| {
            let u = core.mt_solve(&c.pseudo);
            let q_xx = dot(&c.pseudo, &u);
            c.weights
                .iter()
                .map(|&(pos, w)| {
                    let q_yx = dot(&projections[pos], &u);
                    let updated = rank_one_updated_quadratic(q_yy[pos], q_yx, q_xx).max(0.0);
                    w * (1.0 - lambda) * alpha_tilde * (q_yy[pos].sqrt() - updated.sqrt())
                })
                .sum()
        })
        .collect()
}

/// Shared round-protocol state of the three variants.
#[derive(Debug, Clone)]
struct Frame {
    core: ConUcbCore,
    asked: BTreeSet<usize>,
    pending: Option<Vec<f64>>,
    pool: Option<Arc<Vec<Vec<f64>>>>,
    last_scores: Vec<ArmScore>,
}

impl Frame {
    fn new(params: ConUcbParams) -> Result<Self> {
        Ok(Frame {
            core: ConUcbCore::new(params)?,
            asked: BTreeSet::new(),
            pending: None,
            pool: None,
            last_scores: Vec::new(),
        })
    }

    fn begin_round(&mut self) {
        self.asked.clear();
        self.pending = None;
    }

    /// Records the committed candidate's pseudo-context for the answer:
    /// the pool-wide average when the arm pool is known, the slate
    /// restriction otherwise. Scoring always used the slate restriction.
    fn commit(&mut self, candidate: WeightedCandidate, graph: &RelationGraph) -> Query {
        self.asked.insert(candidate.id);
        self.pending = Some(match &self.pool {
            Some(pool) => graph
                .key_term_context(candidate.id, pool)
                .expect("arm pool matches the graph's arm count and dimension"),
            None => candidate.pseudo,
        });
        Query::KeyTerm(candidate.id)
    }

    fn absorb(&mut self, value: f64) {
        let pseudo = self
            .pending
            .take()
            .expect("absorb_answer must follow a planned query");
        self.core
            .observe_keyterm(&pseudo, value)
            .expect("key-term design matrix stays positive definite");
    }

    fn select(&mut self, slate: &ContextSlate) -> usize {
        let (pos, scores) = self.core.select_arm(slate);
        self.last_scores = scores;
        pos
    }

    fn observe(&mut self, x: &[f64], r: f64) {
        self.core
            .observe_arm(x, r)
            .expect("arm design matrix stays positive definite");
    }
}

/// Random key-term selection.
#[derive(Debug, Clone)]
pub struct VarRs {
    frame: Frame,
}

/// Maximal-related-confidence key-term selection.
#[derive(Debug, Clone)]
pub struct VarMrc {
    frame: Frame,
}

/// Largest-confidence-reduction key-term selection.
#[derive(Debug, Clone)]
pub struct VarLcr {
    frame: Frame,
}

macro_rules! shared_policy_impl {
    () => {
        fn dim(&self) -> usize {
            self.frame.core.params().dim
        }

        fn begin_round(&mut self, _t: usize, _slate: &ContextSlate) {
            self.frame.begin_round();
        }

        fn provide_arm_pool(&mut self, pool: std::sync::Arc<Vec<Vec<f64>>>) {
            self.frame.pool = Some(pool);
        }

        fn absorb_answer(&mut self, value: f64) {
            self.frame.absorb(value);
        }

        fn select_arm(&mut self, slate: &ContextSlate) -> usize {
            self.frame.select(slate)
        }

        fn observe_reward(&mut self, x: &[f64], r: f64) {
            self.frame.observe(x, r);
        }

        fn parameter_estimate(&self) -> Vec<f64> {
            self.frame.core.theta().to_vec()
        }

        fn last_scores(&self) -> &[ArmScore] {
            &self.frame.last_scores
        }
    };
}

impl VarRs {
    pub fn new(params: ConUcbParams) -> Result<Self> {
        Ok(VarRs { frame: Frame::new(params)? })
    }

    pub fn core(&self) -> &ConUcbCore {
        &self.frame.core
    }
}

impl Policy for VarRs {
    fn name(&self) -> &str {
        "var-rs"
    }

    fn plan_query(
        &mut self,
        slate: &ContextSlate,
        graph: Option<&RelationGraph>,
        rng: &mut PolicyRng,
    ) -> Option<Query> {
        let graph = graph?;
        let mut candidates = collect_candidates(slate, graph, &self.frame.asked);
        if candidates.is_empty() {
            return None;
        }
        let pick = rng.random_range(0..candidates.len());
        Some(self.frame.commit(candidates.swap_remove(pick), graph))
    }

    shared_policy_impl!();
}

impl VarMrc {
    pub fn new(params: ConUcbParams) -> Result<Self> {
        Ok(VarMrc { frame: Frame::new(params)? })
    }

    pub fn core(&self) -> &ConUcbCore {
        &self.frame.core
    }
}

impl Policy for VarMrc {
    fn name(&self) -> &str {
        "var-mrc"
    }

    fn plan_query(
        &mut self,
        slate: &ContextSlate,
        graph: Option<&RelationGraph>,
        _rng: &mut PolicyRng,
    ) -> Option<Query> {
        let graph = graph?;
        let mut candidates = collect_candidates(slate, graph, &self.frame.asked);
        if candidates.is_empty() {
            return None;
        }
        let scores = mrc_scores(&self.frame.core, slate, &candidates);
        let best = argmax_lowest(scores).expect("candidate list is nonempty");
        Some(self.frame.commit(candidates.swap_remove(best), graph))
    }

    shared_policy_impl!();
}

impl VarLcr {
    pub fn new(params: ConUcbParams) -> Result<Self> {
        Ok(VarLcr { frame: Frame::new(params)? })
    }

    pub fn core(&self) -> &ConUcbCore {
        &self.frame.core
    }
}

impl Policy for VarLcr {
    fn name(&self) -> &str {
        "var-lcr"
    }

    fn plan_query(
        &mut self,
        slate: &ContextSlate,
        graph: Option<&RelationGraph>,
        _rng: &mut PolicyRng,
    ) -> Option<Query> {
        let graph = graph?;
        let mut candidates = collect_candidates(slate, graph, &self.frame.asked);
        if candidates.is_empty() {
            return None;
        }
        let scores = lcr_scores(&self.frame.core, slate, &candidates);
        let best = argmax_lowest(scores).expect("candidate list is nonempty");
        Some(self.frame.commit(candidates.swap_remove(best), graph))
    }

    shared_policy_impl!();
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_unit(rng: &mut StdRng, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = crate::linalg::norm2(&v);
            if n > 1e-3 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    fn slate(contexts: Vec<Vec<f64>>) -> ContextSlate {
        let n = contexts.len();
        ContextSlate::with_raw_contexts(0, (0..n).collect(), contexts).unwrap()
    }

    /// 3 arms, 2 key-terms; key-term 0 relates to arms 0 and 1, key-term 1
    /// to arm 2 only.
    fn small_graph() -> RelationGraph {
        RelationGraph::from_edges(
            3,
            2,
            &[(0, 0, 1.0), (1, 0, 1.0), (2, 1, 1.0)],
        )
        .unwrap()
    }

    fn seeded_core(rng: &mut StdRng, d: usize, lambda: f64) -> ConUcbCore {
        let mut p = ConUcbParams::new(d);
        p.lambda = lambda;
        let mut core = ConUcbCore::new(p).unwrap();
        for _ in 0..12 {
            core.observe_arm(&random_unit(rng, d), rng.random_range(-1.0..1.0))
                .unwrap();
        }
        for _ in 0..6 {
            core.observe_keyterm(&random_unit(rng, d), rng.random_range(-1.0..1.0))
                .unwrap();
        }
        core
    }

    #[test]
    fn single_candidate_is_chosen_by_all_three() {
        let graph = RelationGraph::from_edges(1, 1, &[(0, 0, 1.0)]).unwrap();
        let s = slate(vec![vec![1.0, 0.0]]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let p = ConUcbParams::new(2);
        let mut rs = VarRs::new(p.clone()).unwrap();
        let mut mrc = VarMrc::new(p.clone()).unwrap();
        let mut lcr = VarLcr::new(p).unwrap();
        for policy in [&mut rs as &mut dyn Policy, &mut mrc, &mut lcr] {
            policy.begin_round(0, &s);
            assert_eq!(
                policy.plan_query(&s, Some(&graph), &mut rng),
                Some(Query::KeyTerm(0)),
                "{}",
                policy.name()
            );
        }
    }

    #[test]
    fn lcr_orthogonal_candidate_scores_zero() {
        // With diagonal matrices an orthogonal pseudo-context leaves every
        // projection's quadratic form unchanged: the reduction is exactly 0.
        let core = ConUcbCore::new(ConUcbParams::new(3)).unwrap();
        let s = slate(vec![vec![1.0, 0.0, 0.0]]);
        let orthogonal = WeightedCandidate {
            id: 0,
            pseudo: vec![0.0, 1.0, 0.0],
            weights: vec![(0, 1.0)],
        };
        let aligned = WeightedCandidate {
            id: 1,
            pseudo: vec![1.0, 0.0, 0.0],
            weights: vec![(0, 1.0)],
        };
        let scores = lcr_scores(&core, &s, &[orthogonal, aligned]);
        assert_eq!(scores[0], 0.0);
        assert!(scores[1] > 0.0);
    }

    #[test]
    fn mrc_and_lcr_match_brute_force_reinversion() {
        let mut rng = StdRng::seed_from_u64(23);
        for trial in 0..20 {
            let d = rng.random_range(2..5usize);
            let lambda = rng.random_range(0.2..0.8);
            let core = seeded_core(&mut rng, d, lambda);
            let s = slate((0..4).map(|_| random_unit(&mut rng, d)).collect());
            // Dense random graph over the slate's 4 arms and 3 key-terms.
            let mut edges = Vec::new();
            for a in 0..4 {
                for k in 0..3 {
                    if rng.random_range(0.0..1.0) < 0.7 {
                        edges.push((a, k, rng.random_range(0.1..1.0)));
                    }
                }
            }
            for k in 0..3 {
                if !edges.iter().any(|&(_, ek, _)| ek == k) {
                    edges.push((k % 4, k, 0.5));
                }
            }
            for a in 0..4 {
                if !edges.iter().any(|&(ea, _, _)| ea == a) {
                    edges.push((a, a % 3, 0.5));
                }
            }
            // Rows must sum to 1: renormalize per arm.
            let mut edges_norm = Vec::new();
            for a in 0..4 {
                let sum: f64 = edges.iter().filter(|e| e.0 == a).map(|e| e.2).sum();
                if sum == 0.0 {
                    continue;
                }
                for &(ea, ek, w) in edges.iter().filter(|e| e.0 == a) {
                    edges_norm.push((ea, ek, w / sum));
                }
            }
            let graph = RelationGraph::from_edges(4, 3, &edges_norm).unwrap();
            let candidates = collect_candidates(&s, &graph, &BTreeSet::new());
            if candidates.is_empty() {
                continue;
            }

            // Brute force: explicit inverses straight from the core's
            // matrices (the core is the source of truth for the history).
            let m_inv = {
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] = core_matrix(&core, i, j);
                    }
                }
                m.try_inverse().unwrap()
            };
            let mt = {
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] = core_keyterm_matrix(&core, i, j);
                    }
                }
                m
            };
            let mt_inv = mt.clone().try_inverse().unwrap();
            let alpha_tilde = core.alpha_tilde();

            let mrc = mrc_scores(&core, &s, &candidates);
            let lcr = lcr_scores(&core, &s, &candidates);
            for (c, (got_mrc, got_lcr)) in
                candidates.iter().zip(mrc.iter().zip(lcr.iter()))
            {
                let mut want_mrc = 0.0;
                let mut want_lcr = 0.0;
                let xt = DVector::from_column_slice(&c.pseudo);
                let updated_inv =
                    (&mt + &xt * xt.transpose()).try_inverse().unwrap();
                for &(pos, w) in &c.weights {
                    let x = DVector::from_column_slice(s.context(pos));
                    let y = &m_inv * &x;
                    let norm = y.dot(&(&mt_inv * &y)).sqrt();
                    want_mrc += w * alpha_tilde * norm;
                    let updated_norm = y.dot(&(&updated_inv * &y)).max(0.0).sqrt();
                    want_lcr += w * (1.0 - lambda) * alpha_tilde * (norm - updated_norm);
                }
                assert!(
                    (got_mrc - want_mrc).abs() < 1e-8,
                    "trial {trial}: mrc {got_mrc} vs {want_mrc}"
                );
                assert!(
                    (got_lcr - want_lcr).abs() < 1e-8,
                    "trial {trial}: lcr {got_lcr} vs {want_lcr}"
                );
            }
        }
    }

    // Test-only peeks at the core's matrices.
    fn core_matrix(core: &ConUcbCore, i: usize, j: usize) -> f64 {
        core.arm_matrix_entry(i, j)
    }

    fn core_keyterm_matrix(core: &ConUcbCore, i: usize, j: usize) -> f64 {
        core.keyterm_matrix_entry(i, j)
    }

    #[test]
    fn random_selection_is_seed_deterministic_and_covers() {
        let graph = small_graph();
        let s = slate(vec![vec![1.0, 0.0], vec![0.0, 1.0], random_unit(&mut StdRng::seed_from_u64(1), 2)]);
        let p = ConUcbParams::new(2);

        let draw = |seed: u64| -> Vec<usize> {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut picks = Vec::new();
            for _ in 0..60 {
                let mut rs = VarRs::new(p.clone()).unwrap();
                rs.begin_round(0, &s);
                match rs.plan_query(&s, Some(&graph), &mut rng) {
                    Some(Query::KeyTerm(k)) => picks.push(k),
                    other => panic!("unexpected plan {other:?}"),
                }
            }
            picks
        };
        let a = draw(99);
        let b = draw(99);
        assert_eq!(a, b, "same seed must reproduce the same picks");
        assert!(a.contains(&0) && a.contains(&1), "both candidates get sampled");
    }

    #[test]
    fn asked_keyterms_do_not_repeat_within_round() {
        let graph = small_graph();
        let s = slate(vec![vec![1.0, 0.0], vec![0.0, 1.0], random_unit(&mut StdRng::seed_from_u64(2), 2)]);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut mrc = VarMrc::new(ConUcbParams::new(2)).unwrap();
        mrc.begin_round(0, &s);
        let mut seen = BTreeSet::new();
        while let Some(Query::KeyTerm(k)) = mrc.plan_query(&s, Some(&graph), &mut rng) {
            assert!(seen.insert(k), "key-term {k} repeated within a round");
            mrc.absorb_answer(0.1);
        }
        assert_eq!(seen.len(), 2, "both slate-incident key-terms get asked");
    }
}
