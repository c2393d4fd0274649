//! Synthetic environment: world generation, reward oracles, slate sampling,
//! and episode execution.
//!
//! A [`SyntheticWorld`] is generated in three steps: pseudo feature vectors
//! for key-terms (uniform per dimension), a random key-term set per arm with
//! equal weights, and arm features drawn around the mean of their key-terms'
//! pseudo features, then normalized to unit length. Users are independent
//! uniform preference vectors. Worlds are cheap to regenerate, so experiment
//! files store `(params, seed)` rather than the tensors themselves.
//!
//! Rewards are linear with Gaussian noise. Within a round one noise draw is
//! shared by every arm and one by every key-term, so reward differences
//! between arms of the same round are noise-free.
//!
//! Episodes are split into a pre-generated [`EpisodeScript`] (slates and
//! noise, from the environment RNG stream) and [`run_episode`], which drives
//! a policy through the script. Running several policies against one script
//! compares them on identical slates and identical noise.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RelationGraph;
use crate::linalg::{dot, norm2};
use crate::policy::{Policy, PolicyRng, Query};
use crate::schedule::ConversationSchedule;
use crate::slate::ContextSlate;

/// How many times world generation re-draws the arm/key-term assignment
/// before giving up on covering every key-term.
const MAX_COVERAGE_ATTEMPTS: usize = 10_000;

/// Rounds between successive parameter-error measurements in a trace.
pub const PARAMETER_ERROR_INTERVAL: usize = 50;

/// Generator parameters of a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    /// Context dimension d.
    pub dim: usize,
    /// Arm pool size.
    pub num_arms: usize,
    /// Key-term vocabulary size.
    pub num_keyterms: usize,
    /// Number of users (independent preference vectors).
    pub num_users: usize,
    /// Upper bound on key-terms per arm; each arm draws its count uniformly
    /// from 1..=this.
    pub max_keyterms_per_arm: usize,
    /// Standard deviation of both the feature-generation noise and the
    /// per-round reward noise.
    pub noise_std: f64,
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0
            || self.num_arms == 0
            || self.num_keyterms == 0
            || self.num_users == 0
            || self.max_keyterms_per_arm == 0
        {
            return Err(Error::Config(
                "world sizes (dim, arms, key-terms, users, key-terms per arm) must all be at least 1"
                    .into(),
            ));
        }
        if self.max_keyterms_per_arm > self.num_keyterms {
            return Err(Error::Config(format!(
                "an arm cannot relate to {} distinct key-terms when only {} exist",
                self.max_keyterms_per_arm, self.num_keyterms
            )));
        }
        // Every key-term must be reachable: arms supply at most
        // num_arms * max_keyterms_per_arm incidence slots.
        if self.num_keyterms > self.num_arms * self.max_keyterms_per_arm {
            return Err(Error::Config(format!(
                "{} key-terms cannot all be covered by {} arms with at most {} key-terms each",
                self.num_keyterms, self.num_arms, self.max_keyterms_per_arm
            )));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::Config(format!(
                "noise_std must be positive, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// A generated environment: arm features, key-term relations, and user
/// preference vectors. Immutable after generation.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    params: WorldParams,
    seed: u64,
    /// Pseudo feature per key-term (not normalized).
    keyterm_features: Vec<Vec<f64>>,
    /// Unit-norm feature per arm.
    arm_features: Vec<Vec<f64>>,
    /// Ground-truth preference per user.
    user_preferences: Vec<Vec<f64>>,
    graph: RelationGraph,
}

/// Named RNG streams derived from one master seed. Streams with different
/// labels (or different user/repetition keys) are independent, so e.g. a
/// policy's internal randomness cannot perturb the environment's draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    /// World generation.
    World,
    /// Slates and reward noise of one episode.
    Environment,
    /// A policy's internal randomness in one episode.
    Policy,
}

impl SeedStream {
    fn tag(self) -> u64 {
        match self {
            SeedStream::World => 1,
            SeedStream::Environment => 2,
            SeedStream::Policy => 3,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(master, user, rep, stream)` into one 64-bit seed. Order-sensitive,
/// so swapping user and repetition yields a different stream.
pub fn derive_seed(master: u64, user: usize, rep: usize, stream: SeedStream) -> u64 {
    let mut state = splitmix64(master);
    state = splitmix64(state ^ user as u64);
    state = splitmix64(state ^ rep as u64);
    splitmix64(state ^ stream.tag())
}

/// A fresh RNG positioned at the start of the given stream.
pub fn stream_rng(master: u64, user: usize, rep: usize, stream: SeedStream) -> PolicyRng {
    use rand::SeedableRng;
    PolicyRng::seed_from_u64(derive_seed(master, user, rep, stream))
}

/// Generates a world deterministically from `(params, seed)`.
///
/// The arm/key-term assignment is re-drawn until every key-term is related
/// to at least one arm (an orphaned key-term would have no defined feedback),
/// failing after [`MAX_COVERAGE_ATTEMPTS`] draws.
pub fn generate_world(params: &WorldParams, seed: u64) -> Result<SyntheticWorld> {
    params.validate()?;
    let mut rng = stream_rng(seed, 0, 0, SeedStream::World);
    let d = params.dim;

    let keyterm_features: Vec<Vec<f64>> = (0..params.num_keyterms)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    // (key-term ids, weight 1/n_a) per arm, re-drawn until all key-terms
    // are covered.
    let mut assignment: Option<Vec<Vec<usize>>> = None;
    for _ in 0..MAX_COVERAGE_ATTEMPTS {
        let mut covered = vec![false; params.num_keyterms];
        let candidate: Vec<Vec<usize>> = (0..params.num_arms)
            .map(|_| {
                let n_a = rng.random_range(1..=params.max_keyterms_per_arm);
                let mut ids =
                    rand::seq::index::sample(&mut rng, params.num_keyterms, n_a).into_vec();
                ids.sort_unstable();
                for &k in &ids {
                    covered[k] = true;
                }
                ids
            })
            .collect();
        if covered.iter().all(|&c| c) {
            assignment = Some(candidate);
            break;
        }
    }
    let assignment = assignment.ok_or_else(|| {
        Error::Config(format!(
            "failed to cover all {} key-terms with {} arms after {} attempts; \
             increase arms or key-terms per arm, or reduce the vocabulary",
            params.num_keyterms, params.num_arms, MAX_COVERAGE_ATTEMPTS
        ))
    })?;

    let mut arm_features = Vec::with_capacity(params.num_arms);
    for ids in &assignment {
        let mut mean = vec![0.0; d];
        for &k in ids {
            for (m, v) in mean.iter_mut().zip(&keyterm_features[k]) {
                *m += v / ids.len() as f64;
            }
        }
        // A zero-norm draw cannot be normalized; re-draw (never in practice).
        let x = loop {
            let x: Vec<f64> = mean
                .iter()
                .map(|&m| m + params.noise_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let n = norm2(&x);
            if n > 1e-12 {
                break x.iter().map(|v| v / n).collect::<Vec<f64>>();
            }
        };
        arm_features.push(x);
    }

    let user_preferences: Vec<Vec<f64>> = (0..params.num_users)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    let mut edges = Vec::new();
    for (a, ids) in assignment.iter().enumerate() {
        let w = 1.0 / ids.len() as f64;
        for &k in ids {
            edges.push((a, k, w));
        }
    }
    let graph = RelationGraph::from_edges(params.num_arms, params.num_keyterms, &edges)?;

    Ok(SyntheticWorld {
        params: params.clone(),
        seed,
        keyterm_features,
        arm_features,
        user_preferences,
        graph,
    })
}

impl SyntheticWorld {
    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn graph(&self) -> &RelationGraph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn num_arms(&self) -> usize {
        self.params.num_arms
    }

    pub fn num_users(&self) -> usize {
        self.params.num_users
    }

    pub fn arm_feature(&self, arm: usize) -> &[f64] {
        &self.arm_features[arm]
    }

    pub fn keyterm_feature(&self, keyterm: usize) -> &[f64] {
        &self.keyterm_features[keyterm]
    }

    pub fn user_preference(&self, user: usize) -> &[f64] {
        &self.user_preferences[user]
    }

    /// Noise-free expected reward of an arm for a user.
    pub fn arm_mean(&self, user: usize, arm: usize) -> f64 {
        dot(&self.arm_features[arm], &self.user_preferences[user])
    }

    /// Arm reward under the round's shared noise draw.
    pub fn arm_reward(&self, user: usize, arm: usize, round_noise: f64) -> f64 {
        self.arm_mean(user, arm) + round_noise
    }

    /// Noise-free expected key-term feedback: the weight-normalized average
    /// of incident arms' expected rewards over the whole arm pool.
    pub fn keyterm_mean(&self, user: usize, keyterm: usize) -> f64 {
        let total = self.graph.keyterm_weight_sum(keyterm);
        self.graph
            .keyterm_arms(keyterm)
            .iter()
            .map(|&(a, w)| (w / total) * self.arm_mean(user, a))
            .sum()
    }

    /// Key-term feedback under the round's shared noise draw.
    pub fn keyterm_reward(&self, user: usize, keyterm: usize, round_noise: f64) -> f64 {
        self.keyterm_mean(user, keyterm) + round_noise
    }

    /// Bernoulli click with success probability `arm_mean` clipped to [0,1].
    /// The binary counterpart of [`Self::arm_reward`] for click-log studies.
    pub fn binary_arm_reward(&self, user: usize, arm: usize, rng: &mut PolicyRng) -> f64 {
        let p = self.arm_mean(user, arm).clamp(0.0, 1.0);
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }

    /// Draws `size` distinct arms uniformly and packages them as a slate.
    pub fn sample_slate(&self, round: usize, size: usize, rng: &mut PolicyRng) -> Result<ContextSlate> {
        let ids = self.sample_slate_ids(size, rng)?;
        self.slate_from_ids(round, &ids)
    }

    /// Draws `size` distinct arm ids uniformly without replacement.
    pub fn sample_slate_ids(&self, size: usize, rng: &mut PolicyRng) -> Result<Vec<usize>> {
        if size == 0 || size > self.params.num_arms {
            return Err(Error::Config(format!(
                "slate size must be in 1..={}, got {size}",
                self.params.num_arms
            )));
        }
        Ok(rand::seq::index::sample(rng, self.params.num_arms, size).into_vec())
    }

    /// Builds the slate holding the given arms' full feature vectors.
    pub fn slate_from_ids(&self, round: usize, ids: &[usize]) -> Result<ContextSlate> {
        let contexts = self.contexts_of(ids, self.params.dim)?;
        ContextSlate::new(round, ids.to_vec(), contexts)
    }

    /// Builds a slate exposing only the first `observable_dim` coordinates
    /// of each arm's feature vector, for learners that model the remainder
    /// as hidden features. Rewards still come from the full vectors.
    pub fn observable_slate_from_ids(
        &self,
        round: usize,
        ids: &[usize],
        observable_dim: usize,
    ) -> Result<ContextSlate> {
        if observable_dim == 0 || observable_dim > self.params.dim {
            return Err(Error::Config(format!(
                "observable dimension must be in 1..={}, got {observable_dim}",
                self.params.dim
            )));
        }
        let contexts = self.contexts_of(ids, observable_dim)?;
        ContextSlate::with_raw_contexts(round, ids.to_vec(), contexts)
    }

    fn contexts_of(&self, ids: &[usize], prefix: usize) -> Result<Vec<Vec<f64>>> {
        ids.iter()
            .map(|&a| {
                self.arm_features
                    .get(a)
                    .map(|x| x[..prefix].to_vec())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "arm id {a} out of range ({} arms)",
                            self.params.num_arms
                        ))
                    })
            })
            .collect()
    }
}

/// One round of a pre-generated episode: which arms are shown and the two
/// noise draws shared by, respectively, all arm rewards and all key-term
/// feedback of the round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundScript {
    pub slate_ids: Vec<usize>,
    pub arm_noise: f64,
    pub keyterm_noise: f64,
}

/// A full episode's environment randomness, fixed before any policy runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeScript {
    pub user: usize,
    pub rounds: Vec<RoundScript>,
}

impl EpisodeScript {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }
}

/// Pre-draws the slates and noise of one episode from the environment
/// stream of `(master_seed, user, rep)`. Policies compared on the same
/// script face identical environments.
pub fn script_episode(
    world: &SyntheticWorld,
    user: usize,
    rep: usize,
    master_seed: u64,
    horizon: usize,
    slate_size: usize,
) -> Result<EpisodeScript> {
    if user >= world.params.num_users {
        return Err(Error::Config(format!(
            "user {user} out of range ({} users)",
            world.params.num_users
        )));
    }
    if horizon == 0 {
        return Err(Error::Config("episode horizon must be at least 1".into()));
    }
    let mut rng = stream_rng(master_seed, user, rep, SeedStream::Environment);
    let sigma = world.params.noise_std;
    let mut rounds = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let slate_ids = world.sample_slate_ids(slate_size, &mut rng)?;
        let arm_noise = sigma * rng.sample::<f64, _>(StandardNormal);
        let keyterm_noise = sigma * rng.sample::<f64, _>(StandardNormal);
        rounds.push(RoundScript {
            slate_ids,
            arm_noise,
            keyterm_noise,
        });
    }
    Ok(EpisodeScript { user, rounds })
}

/// What happened in one round of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub slate_ids: Vec<usize>,
    pub chosen_arm: usize,
    pub reward: f64,
    /// Expected-reward gap to the best slate arm; nonnegative.
    pub regret: f64,
    /// Conversation budget units actually consumed this round.
    pub conversations: usize,
}

/// `‖θ̂ − θ_u‖₂` measured after the round's update.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterErrorSample {
    pub round: usize,
    pub error: f64,
}

/// Full record of one policy's episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub policy: String,
    pub user: usize,
    pub rounds: Vec<RoundRecord>,
    /// Running sum of per-round regret; one entry per round, nondecreasing.
    pub cumulative_regret: Vec<f64>,
    /// Sampled every [`PARAMETER_ERROR_INTERVAL`] rounds.
    pub parameter_errors: Vec<ParameterErrorSample>,
}

impl EpisodeTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// Drives a policy through a scripted episode on full feature vectors.
pub fn run_episode(
    policy: &mut dyn Policy,
    world: &SyntheticWorld,
    script: &EpisodeScript,
    schedule: &ConversationSchedule,
    policy_rng: &mut PolicyRng,
) -> Result<EpisodeTrace> {
    if policy.dim() != world.params.dim {
        return Err(Error::Config(format!(
            "policy dimension {} does not match world dimension {}",
            policy.dim(),
            world.params.dim
        )));
    }
    run_script(policy, world, script, schedule, policy_rng, None)
}

/// Drives a policy that sees only the first `observable_dim` feature
/// coordinates; rewards and regret still come from the full vectors.
pub fn run_hidden_episode(
    policy: &mut dyn Policy,
    world: &SyntheticWorld,
    script: &EpisodeScript,
    schedule: &ConversationSchedule,
    policy_rng: &mut PolicyRng,
    observable_dim: usize,
) -> Result<EpisodeTrace> {
    if policy.dim() != observable_dim {
        return Err(Error::Config(format!(
            "policy dimension {} does not match observable dimension {observable_dim}",
            policy.dim(),
        )));
    }
    run_script(policy, world, script, schedule, policy_rng, Some(observable_dim))
}

fn run_script(
    policy: &mut dyn Policy,
    world: &SyntheticWorld,
    script: &EpisodeScript,
    schedule: &ConversationSchedule,
    policy_rng: &mut PolicyRng,
    observable_dim: Option<usize>,
) -> Result<EpisodeTrace> {
    schedule.validate()?;
    if script.user >= world.params.num_users {
        return Err(Error::Config(format!(
            "script user {} out of range ({} users)",
            script.user, world.params.num_users
        )));
    }
    let user = script.user;
    let theta = world.user_preference(user);
    let od = observable_dim.unwrap_or(world.params.dim);
    let theta_prefix = &theta[..od];
    policy.provide_arm_pool(Arc::new(
        (0..world.params.num_arms)
            .map(|a| world.arm_feature(a)[..od].to_vec())
            .collect(),
    ));

    let mut rounds = Vec::with_capacity(script.rounds.len());
    let mut cumulative_regret = Vec::with_capacity(script.rounds.len());
    let mut parameter_errors = Vec::new();
    let mut total_regret = 0.0;

    for (idx, rs) in script.rounds.iter().enumerate() {
        let t = idx + 1;
        let slate = match observable_dim {
            Some(od) => world.observable_slate_from_ids(t, &rs.slate_ids, od)?,
            None => world.slate_from_ids(t, &rs.slate_ids)?,
        };
        policy.begin_round(t, &slate);

        let mut conversations = 0usize;
        for _ in 0..schedule.budget(t) {
            match policy.plan_query(&slate, Some(&world.graph), policy_rng) {
                Some(Query::KeyTerm(k)) => {
                    policy.absorb_answer(world.keyterm_reward(user, k, rs.keyterm_noise));
                    conversations += 1;
                }
                Some(Query::ArmRating(pos)) => {
                    let arm = slate.arm_id(pos);
                    policy.absorb_answer(world.arm_reward(user, arm, rs.arm_noise));
                    conversations += 1;
                }
                None => break,
            }
        }

        let pos = policy.select_arm(&slate);
        let chosen_arm = slate.arm_id(pos);
        let reward = world.arm_reward(user, chosen_arm, rs.arm_noise);
        policy.observe_reward(slate.context(pos), reward);

        let chosen_mean = world.arm_mean(user, chosen_arm);
        let best_mean = rs
            .slate_ids
            .iter()
            .map(|&a| world.arm_mean(user, a))
            .fold(f64::NEG_INFINITY, f64::max);
        let regret = best_mean - chosen_mean;

        total_regret += regret;
        cumulative_regret.push(total_regret);
        rounds.push(RoundRecord {
            round: t,
            slate_ids: rs.slate_ids.clone(),
            chosen_arm,
            reward,
            regret,
            conversations,
        });

        if t % PARAMETER_ERROR_INTERVAL == 0 {
            let estimate = policy.parameter_estimate();
            let error: f64 = estimate
                .iter()
                .zip(theta_prefix)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            parameter_errors.push(ParameterErrorSample { round: t, error });
        }
    }

    Ok(EpisodeTrace {
        policy: policy.name().to_string(),
        user,
        rounds,
        cumulative_regret,
        parameter_errors,
    })
}
