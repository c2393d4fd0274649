//! Offline evaluation of interactive policies on logged click data.
//!
//! The evaluator follows the standard unbiased replay protocol: each logged
//! event is augmented to a candidate pool containing the served arm plus
//! uniform draws from the same user's interacted arms; the policy under
//! evaluation picks from the pool, and only when its pick coincides with the
//! served arm is the logged reward revealed, counted toward CTR, and used to
//! update the policy. Unmatched events update nothing at the arm level.
//! Conversational feedback is not logged, so it is synthesized from a
//! per-user preference vector fitted to the log by ridge regression.
//!
//! CTR is reported per window of events (500 by default) and normalized by
//! the logging policy's own click rate over the replayed events; a window
//! with no matched events reports a null CTR rather than zero.
//!
//! Arm ids must be dense (`0..num_arms`, one feature row each); exporters of
//! real logs are expected to relabel. Replayed outcomes are invariant to the
//! relabeling: pools are drawn over per-user first-appearance order and all
//! tie-breaking is positional, so ids never feed the arithmetic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RelationGraph;
use crate::linalg::{dot, PsdMatrix};
use crate::policy::{argmax_lowest, Policy, PolicyRng, Query};
use crate::schedule::ConversationSchedule;
use crate::sim::{stream_rng, SeedStream, SyntheticWorld};
use crate::slate::ContextSlate;

/// One interaction record: the user was shown an arm and clicked or not.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub user: usize,
    pub timestamp: u64,
    pub arm: usize,
    /// 0.0 or 1.0.
    pub reward: f64,
}

/// An interaction log with its arm feature table and optional arm/key-term
/// tags. Events are replayed in the order they are stored; timestamps are
/// carried but not used for ordering.
#[derive(Debug, Clone)]
pub struct LoggedDataset {
    events: Vec<LoggedEvent>,
    /// Feature row per arm id.
    features: Vec<Vec<f64>>,
    /// Present when tags were provided; tagged arms carry equal weights.
    graph: Option<RelationGraph>,
}

impl LoggedDataset {
    /// Validates and assembles a dataset. When `tags` is given, every arm
    /// must be tagged at least once (the relation graph has no notion of an
    /// untagged arm) and duplicate tags collapse.
    pub fn new(
        events: Vec<LoggedEvent>,
        features: Vec<Vec<f64>>,
        tags: Option<&[(usize, usize)]>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("feature table is empty".into()));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::Config("arm features must have dimension >= 1".into()));
        }
        for (a, x) in features.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Config(format!(
                    "arm {a} has feature dimension {}, expected {dim}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("arm {a} has a non-finite feature")));
            }
        }
        for (i, ev) in events.iter().enumerate() {
            if ev.arm >= features.len() {
                return Err(Error::Config(format!(
                    "event {i} references arm {} outside the feature table ({} arms)",
                    ev.arm,
                    features.len()
                )));
            }
            if ev.reward != 0.0 && ev.reward != 1.0 {
                return Err(Error::Config(format!(
                    "event {i} has reward {}, expected 0 or 1",
                    ev.reward
                )));
            }
        }
        let graph = match tags {
            None => None,
            Some(tags) => {
                let mut per_arm: Vec<std::collections::BTreeSet<usize>> =
                    vec![Default::default(); features.len()];
                let mut max_keyterm = 0;
                for &(a, k) in tags {
                    if a >= features.len() {
                        return Err(Error::Config(format!(
                            "tag references arm {a} outside the feature table ({} arms)",
                            features.len()
                        )));
                    }
                    per_arm[a].insert(k);
                    max_keyterm = max_keyterm.max(k);
                }
                let mut edges = Vec::new();
                for (a, ks) in per_arm.iter().enumerate() {
                    if ks.is_empty() {
                        return Err(Error::Config(format!(
                            "arm {a} has no key-term tag; tag every arm or omit tags entirely"
                        )));
                    }
                    let w = 1.0 / ks.len() as f64;
                    for &k in ks {
                        edges.push((a, k, w));
                    }
                }
                Some(RelationGraph::from_edges(
                    features.len(),
                    max_keyterm + 1,
                    &edges,
                )?)
            }
        };
        Ok(LoggedDataset {
            events,
            features,
            graph,
        })
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.events
    }

    pub fn num_arms(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn feature(&self, arm: usize) -> &[f64] {
        &self.features[arm]
    }

    pub fn graph(&self) -> Option<&RelationGraph> {
        self.graph.as_ref()
    }

    /// Click rate over the whole log.
    pub fn click_rate(&self) -> f64 {
        if self.events.is_empty() {
            return 0.0;
        }
        self.events.iter().map(|e| e.reward).sum::<f64>() / self.events.len() as f64
    }

    /// Distinct arms each user interacted with, in first-appearance order.
    pub fn interacted_arms(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for ev in &self.events {
            let list = map.entry(ev.user).or_default();
            if !list.contains(&ev.arm) {
                list.push(ev.arm);
            }
        }
        map
    }

    /// Loads the three delimited text files (tags optional):
    ///
    /// ```text
    /// events:   user_id, timestamp, arm_id, reward{0|1}
    /// features: arm_id, f1, ..., fd
    /// tags:     arm_id, keyterm_id
    /// ```
    ///
    /// Blank lines and lines starting with `#` are skipped. Feature rows may
    /// come in any order but must cover arm ids 0..A-1 exactly once.
    pub fn load(
        events_path: &Path,
        features_path: &Path,
        tags_path: Option<&Path>,
    ) -> Result<Self> {
        let features = load_feature_table(features_path)?;
        let events = load_events(events_path)?;
        let tags = match tags_path {
            None => None,
            Some(p) => Some(load_tags(p)?),
        };
        LoggedDataset::new(events, features, tags.as_deref())
    }

    /// Writes the same formats [`LoggedDataset::load`] reads. The tag file
    /// is written only when the dataset has tags.
    pub fn save(
        &self,
        events_path: &Path,
        features_path: &Path,
        tags_path: Option<&Path>,
    ) -> Result<()> {
        let mut out = String::new();
        for ev in &self.events {
            writeln!(out, "{}, {}, {}, {}", ev.user, ev.timestamp, ev.arm, ev.reward as u8)
                .expect("string write cannot fail");
        }
        std::fs::write(events_path, out).map_err(|e| Error::io(events_path, e))?;

        let mut out = String::new();
        for (a, x) in self.features.iter().enumerate() {
            write!(out, "{a}").expect("string write cannot fail");
            for v in x {
                write!(out, ", {v}").expect("string write cannot fail");
            }
            out.push('\n');
        }
        std::fs::write(features_path, out).map_err(|e| Error::io(features_path, e))?;

        if let (Some(path), Some(graph)) = (tags_path, &self.graph) {
            let mut out = String::new();
            for a in 0..graph.num_arms() {
                for &(k, _) in graph.arm_keyterms(a) {
                    writeln!(out, "{a}, {k}").expect("string write cannot fail");
                }
            }
            std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(idx, line)| {
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((idx + 1, line))
        }
    })
}

fn load_events(path: &Path) -> Result<Vec<LoggedEvent>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (|| {
            let [user, timestamp, arm, reward] = fields.as_slice() else {
                return None;
            };
            Some(LoggedEvent {
                user: user.parse().ok()?,
                timestamp: timestamp.parse().ok()?,
                arm: arm.parse().ok()?,
                reward: reward.parse().ok()?,
            })
        })()
        .ok_or_else(|| {
            Error::load(path, lineno, "expected `user_id, timestamp, arm_id, reward{0|1}`")
        })?;
        events.push(parsed);
    }
    Ok(events)
}

fn load_feature_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let mut fields = line.split(',').map(str::trim);
        let parsed = (|| {
            let arm: usize = fields.next()?.parse().ok()?;
            let mut x = Vec::new();
            for f in fields {
                x.push(f.parse::<f64>().ok()?);
            }
            if x.is_empty() {
                return None;
            }
            Some((arm, x))
        })()
        .ok_or_else(|| Error::load(path, lineno, "expected `arm_id, f1, ..., fd`"))?;
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(Error::load(path, 0, "feature table is empty"));
    }
    let num_arms = rows.len();
    let mut features: Vec<Option<Vec<f64>>> = vec![None; num_arms];
    for (arm, x) in rows {
        if arm >= num_arms {
            return Err(Error::load(
                path,
                0,
                format!("arm id {arm} with only {num_arms} rows; ids must be 0..{num_arms}"),
            ));
        }
        if features[arm].replace(x).is_some() {
            return Err(Error::load(path, 0, format!("arm {arm} appears twice")));
        }
    }
    // Every slot filled: len rows, distinct ids < len.
    Ok(features.into_iter().map(|x| x.unwrap()).collect())
}

fn load_tags(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tags = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (|| {
            let [arm, keyterm] = fields.as_slice() else {
                return None;
            };
            Some((arm.parse().ok()?, keyterm.parse().ok()?))
        })()
        .ok_or_else(|| Error::load(path, lineno, "expected `arm_id, keyterm_id`"))?;
        tags.push(parsed);
    }
    Ok(tags)
}

/// Ridge fit of one user's preference vector from their logged events:
/// `(λ_r I + Σ x xᵀ)⁻¹ Σ x r`.
pub fn fit_ground_truth(dataset: &LoggedDataset, user: usize, ridge: f64) -> Result<Vec<f64>> {
    if !(ridge > 0.0) {
        return Err(Error::Config(format!("ridge must be positive, got {ridge}")));
    }
    let d = dataset.dim();
    let mut m = PsdMatrix::scaled_identity(d, ridge);
    let mut b = vec![0.0; d];
    let mut count = 0usize;
    for ev in &dataset.events {
        if ev.user != user {
            continue;
        }
        let x = dataset.feature(ev.arm);
        m.rank_one_update(x, 1.0);
        for (bi, xi) in b.iter_mut().zip(x) {
            *bi += xi * ev.reward;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Usage(format!("user {user} has no logged events")));
    }
    Ok(m.cholesky()?.solve(&b))
}

/// One replayed event: the index of its logged event and the candidate pool
/// (served arm included, order shuffled).
#[derive(Debug, Clone, PartialEq)]
pub struct PooledEvent {
    pub event_index: usize,
    pub pool: Vec<usize>,
}

/// The replayable portion of a dataset at a fixed pool size.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDataset {
    pub pool_size: usize,
    pub events: Vec<PooledEvent>,
    /// Events dropped because their user had fewer distinct interacted arms
    /// than the pool size.
    pub skipped: usize,
}

/// Augments every event with `pool_size - 1` arms drawn uniformly without
/// replacement from the user's distinct interacted arms (served arm
/// excluded from the draw, then mixed back in by a shuffle).
///
/// When the log was collected uniformly over a user's arm set, the served
/// arm is exchangeable with its pool mates, which is what makes matched
/// rewards an unbiased CTR sample.
pub fn build_pools(
    dataset: &LoggedDataset,
    pool_size: usize,
    rng: &mut PolicyRng,
) -> Result<PooledDataset> {
    if pool_size == 0 {
        return Err(Error::Config("pool size must be at least 1".into()));
    }
    let interacted = dataset.interacted_arms();
    let mut events = Vec::new();
    let mut skipped = 0usize;
    for (event_index, ev) in dataset.events.iter().enumerate() {
        let arms = &interacted[&ev.user];
        if arms.len() < pool_size {
            skipped += 1;
            continue;
        }
        let served_pos = arms.iter().position(|&a| a == ev.arm).expect("arm interacted");
        let mut pool = Vec::with_capacity(pool_size);
        pool.push(ev.arm);
        for j in rand::seq::index::sample(rng, arms.len() - 1, pool_size - 1) {
            // Index into the list with the served arm's slot removed.
            pool.push(arms[j + usize::from(j >= served_pos)]);
        }
        pool.shuffle(rng);
        events.push(PooledEvent { event_index, pool });
    }
    Ok(PooledDataset {
        pool_size,
        events,
        skipped,
    })
}

/// How synthesized conversational answers are rendered during replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// The fitted expected value itself.
    Continuous,
    /// A Bernoulli draw with the fitted expected value clipped to [0,1].
    Binary,
}

/// Replay settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub schedule: ConversationSchedule,
    pub feedback: FeedbackMode,
    /// Ridge weight of the per-user ground-truth fit.
    pub ground_truth_ridge: f64,
    /// Events per CTR window.
    pub window: usize,
    /// Master seed for feedback draws and policy randomness.
    pub seed: u64,
}

impl ReplayConfig {
    pub fn new(schedule: ConversationSchedule) -> Self {
        ReplayConfig {
            schedule,
            feedback: FeedbackMode::Continuous,
            ground_truth_ridge: 1.0,
            window: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if !(self.ground_truth_ridge > 0.0) {
            return Err(Error::Config(format!(
                "ground-truth ridge must be positive, got {}",
                self.ground_truth_ridge
            )));
        }
        Ok(())
    }
}

/// CTR of one window of replayed events.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStat {
    pub window_index: usize,
    /// Replayed events that fell in this window, matched or not.
    pub events: usize,
    pub matches: usize,
    pub clicks: f64,
    /// `clicks / matches`; absent when the window had no match.
    pub ctr: Option<f64>,
    /// `ctr` divided by the logging policy's click rate.
    pub normalized_ctr: Option<f64>,
}

/// Replay outcome: per-window CTR plus whole-run totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub windows: Vec<WindowStat>,
    pub total_events: usize,
    pub total_matches: usize,
    pub total_clicks: f64,
    /// Click rate of the log itself over the replayed events (the
    /// normalization denominator).
    pub logging_ctr: f64,
    pub replay_ctr: Option<f64>,
    pub normalized_ctr: Option<f64>,
    /// Carried over from pool construction.
    pub skipped_events: usize,
}

impl ReplayReport {
    /// Writes `window_index, ctr, normalized_ctr, matches` rows; null CTRs
    /// become empty fields.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("window_index,ctr,normalized_ctr,matches\n");
        for w in &self.windows {
            let ctr = w.ctr.map(|v| v.to_string()).unwrap_or_default();
            let norm = w.normalized_ctr.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", w.window_index, ctr, norm, w.matches)
                .expect("string write cannot fail");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Replays a pooled log against per-user policies created by `make_policy`.
///
/// Each user's policy sees that user's replayed events as consecutive rounds
/// (its conversation schedule runs on this per-user clock). Conversational
/// answers come from the per-user ridge fit; they are absorbed whether or
/// not the event ends up matching, since key-term feedback is synthesized
/// rather than logged. Arm-level learning happens only on matches.
pub fn replay(
    dataset: &LoggedDataset,
    pools: &PooledDataset,
    config: &ReplayConfig,
    mut make_policy: impl FnMut(usize) -> Result<Box<dyn Policy>>,
) -> Result<ReplayReport> {
    config.validate()?;

    struct UserState {
        policy: Box<dyn Policy>,
        theta_star: Vec<f64>,
        policy_rng: PolicyRng,
        feedback_rng: PolicyRng,
        clock: usize,
    }
    let mut users: BTreeMap<usize, UserState> = BTreeMap::new();
    let arm_pool: Arc<Vec<Vec<f64>>> = Arc::new(dataset.features.clone());

    let mut windows: Vec<WindowStat> = Vec::new();
    let mut total_matches = 0usize;
    let mut total_clicks = 0.0;
    let mut logged_clicks = 0.0;

    for (g, pe) in pools.events.iter().enumerate() {
        let ev = &dataset.events[pe.event_index];
        logged_clicks += ev.reward;

        let state = match users.entry(ev.user) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                let mut policy = make_policy(ev.user)?;
                if policy.dim() != dataset.dim() {
                    return Err(Error::Config(format!(
                        "policy dimension {} does not match dataset dimension {}",
                        policy.dim(),
                        dataset.dim()
                    )));
                }
                policy.provide_arm_pool(Arc::clone(&arm_pool));
                e.insert(UserState {
                    policy,
                    theta_star: fit_ground_truth(dataset, ev.user, config.ground_truth_ridge)?,
                    policy_rng: stream_rng(config.seed, ev.user, 0, SeedStream::Policy),
                    feedback_rng: stream_rng(config.seed, ev.user, 0, SeedStream::Environment),
                    clock: 0,
                })
            }
        };

        state.clock += 1;
        let t = state.clock;
        let contexts: Vec<Vec<f64>> = pe.pool.iter().map(|&a| dataset.feature(a).to_vec()).collect();
        let slate = ContextSlate::with_raw_contexts(t, pe.pool.clone(), contexts)?;
        state.policy.begin_round(t, &slate);

        for _ in 0..config.schedule.budget(t) {
            let query = state
                .policy
                .plan_query(&slate, dataset.graph(), &mut state.policy_rng);
            let mean = match query {
                Some(Query::KeyTerm(k)) => {
                    let graph = dataset.graph().expect("key-term query implies a graph");
                    keyterm_ground_truth(graph, dataset, k, &state.theta_star)
                }
                Some(Query::ArmRating(pos)) => {
                    dot(dataset.feature(slate.arm_id(pos)), &state.theta_star)
                }
                None => break,
            };
            let value = match config.feedback {
                FeedbackMode::Continuous => mean,
                FeedbackMode::Binary => {
                    let p = mean.clamp(0.0, 1.0);
                    f64::from(state.feedback_rng.random::<f64>() < p)
                }
            };
            state.policy.absorb_answer(value);
        }

        let pos = state.policy.select_arm(&slate);
        let window_index = g / config.window;
        if windows.len() <= window_index {
            windows.push(WindowStat {
                window_index,
                events: 0,
                matches: 0,
                clicks: 0.0,
                ctr: None,
                normalized_ctr: None,
            });
        }
        let w = &mut windows[window_index];
        w.events += 1;
        if slate.arm_id(pos) == ev.arm {
            state.policy.observe_reward(slate.context(pos), ev.reward);
            w.matches += 1;
            w.clicks += ev.reward;
            total_matches += 1;
            total_clicks += ev.reward;
        }
    }

    let total_events = pools.events.len();
    let logging_ctr = if total_events > 0 {
        logged_clicks / total_events as f64
    } else {
        0.0
    };
    for w in &mut windows {
        if w.matches > 0 {
            let ctr = w.clicks / w.matches as f64;
            w.ctr = Some(ctr);
            if logging_ctr > 0.0 {
                w.normalized_ctr = Some(ctr / logging_ctr);
            }
        }
    }
    let replay_ctr = (total_matches > 0).then(|| total_clicks / total_matches as f64);
    let normalized_ctr = match replay_ctr {
        Some(ctr) if logging_ctr > 0.0 => Some(ctr / logging_ctr),
        _ => None,
    };

    Ok(ReplayReport {
        windows,
        total_events,
        total_matches,
        total_clicks,
        logging_ctr,
        replay_ctr,
        normalized_ctr,
        skipped_events: pools.skipped,
    })
}

/// Expected key-term feedback under a fitted preference vector: the
/// weight-normalized average of incident arms' fitted means.
fn keyterm_ground_truth(
    graph: &RelationGraph,
    dataset: &LoggedDataset,
    keyterm: usize,
    theta: &[f64],
) -> f64 {
    let total = graph.keyterm_weight_sum(keyterm);
    graph
        .keyterm_arms(keyterm)
        .iter()
        .map(|&(a, w)| (w / total) * dot(dataset.feature(a), theta))
        .sum()
}

/// Bernoulli click model on top of expected rewards: the click probability
/// is `intercept + slope * mean`, clipped to [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickModel {
    pub intercept: f64,
    pub slope: f64,
}

impl ClickModel {
    pub fn probability(&self, mean: f64) -> f64 {
        (self.intercept + self.slope * mean).clamp(0.0, 1.0)
    }
}

/// Shape of a synthesized uniform-logging click log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSynthesis {
    /// How many of the world's users appear in the log (ids 0..users).
    pub users: usize,
    pub events_per_user: usize,
    pub click: ClickModel,
}

/// Synthesizes a click log under a uniform logging policy: users take turns
/// round-robin, each event serves an arm drawn uniformly from the whole
/// pool, and clicks are Bernoulli draws from the click model applied to the
/// arm's expected reward. Carries the world's features and key-term tags.
pub fn synthesize_uniform_log(
    world: &SyntheticWorld,
    spec: &LogSynthesis,
    seed: u64,
) -> Result<LoggedDataset> {
    if spec.users == 0 || spec.users > world.num_users() {
        return Err(Error::Config(format!(
            "log users must be in 1..={}, got {}",
            world.num_users(),
            spec.users
        )));
    }
    if spec.events_per_user == 0 {
        return Err(Error::Config("events_per_user must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0, 0, SeedStream::Environment);
    let total = spec.users * spec.events_per_user;
    let mut events = Vec::with_capacity(total);
    for t in 0..total {
        let user = t % spec.users;
        let arm = rng.random_range(0..world.num_arms());
        let p = spec.click.probability(world.arm_mean(user, arm));
        let reward = f64::from(rng.random::<f64>() < p);
        events.push(LoggedEvent {
            user,
            timestamp: t as u64,
            arm,
            reward,
        });
    }
    let features: Vec<Vec<f64>> = (0..world.num_arms())
        .map(|a| world.arm_feature(a).to_vec())
        .collect();
    let mut tags = Vec::new();
    for a in 0..world.num_arms() {
        for &(k, _) in world.graph().arm_keyterms(a) {
            tags.push((a, k));
        }
    }
    LoggedDataset::new(events, features, Some(&tags))
}

/// Non-learning reference policy: scores arms by a fixed linear function of
/// their contexts and ignores all feedback. Used to calibrate the evaluator,
/// since its true CTR under any pool distribution is directly simulable.
#[derive(Debug, Clone)]
pub struct FixedScorePolicy {
    weights: Vec<f64>,
}

impl FixedScorePolicy {
    pub fn new(weights: Vec<f64>) -> Self {
        FixedScorePolicy { weights }
    }
}

impl Policy for FixedScorePolicy {
    fn name(&self) -> &str {
        "fixed-score"
    }

    fn dim(&self) -> usize {
        self.weights.len()
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

    fn absorb_answer(&mut self, _value: f64) {}

    fn select_arm(&mut self, slate: &ContextSlate) -> usize {
        argmax_lowest(slate.iter().map(|(_, x)| dot(x, &self.weights)))
            .expect("slates are never empty")
    }

    fn observe_reward(&mut self, _x: &[f64], _r: f64) {}

    fn parameter_estimate(&self) -> Vec<f64> {
        self.weights.clone()
    }
}

/// Picks uniformly among pool positions; the replayed stand-in for the
/// logging policy itself.
#[derive(Debug, Clone)]
pub struct UniformRandomPolicy {
    dim: usize,
    rng: PolicyRng,
}

impl UniformRandomPolicy {
    pub fn new(dim: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        UniformRandomPolicy {
            dim,
            rng: PolicyRng::seed_from_u64(seed),
        }
    }
}

impl Policy for UniformRandomPolicy {
    fn name(&self) -> &str {
        "uniform-random"
    }

    fn dim(&self) -> usize {
        self.dim
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

    fn absorb_answer(&mut self, _value: f64) {}

    fn select_arm(&mut self, slate: &ContextSlate) -> usize {
        self.rng.random_range(0..slate.len())
    }

    fn observe_reward(&mut self, _x: &[f64], _r: f64) {}

    fn parameter_estimate(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// True expected CTR of a policy choosing from uniform without-replacement
/// pools over the whole arm set, estimated over `draws` pools. The policy
/// is never updated, so the estimate is exact up to pool sampling noise for
/// non-learning policies.
pub fn direct_pool_ctr(
    world: &SyntheticWorld,
    click: &ClickModel,
    user: usize,
    pool_size: usize,
    policy: &mut dyn Policy,
    draws: usize,
    rng: &mut PolicyRng,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::Config("draws must be at least 1".into()));
    }
    let mut sum = 0.0;
    for i in 0..draws {
        let slate = world.sample_slate(i + 1, pool_size, rng)?;
        policy.begin_round(i + 1, &slate);
        let pos = policy.select_arm(&slate);
        sum += click.probability(world.arm_mean(user, slate.arm_id(pos)));
    }
    Ok(sum / draws as f64)
}
