//! Experiment orchestration: configuration, multi-seed benchmark runs,
//! aggregation, and CSV/manifest emission.
//!
//! A benchmark run crosses policies with seeds and users. For one (seed,
//! user) pair every policy plays the same pre-generated episode script, so
//! differences in their traces come from the policies alone. Aggregation
//! folds episodes in a canonical order (sorted by seed value, then user), so
//! reports are invariant to the order seeds are listed in and reruns emit
//! byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hidden::{HConUcb, HLinUcb, HiddenParams};
use crate::linalg::norm2;
use crate::policy::{
    ArmCon, ConUcb, ConUcbParams, LinUcb, LinUcbParams, Policy, VarLcr, VarMrc, VarRs,
};
use crate::schedule::ConversationSchedule;
use crate::sim::{
    derive_seed, generate_world, run_episode, run_hidden_episode, script_episode, stream_rng,
    EpisodeTrace, SeedStream, WorldParams, PARAMETER_ERROR_INTERVAL,
};

/// Which learner a [`PolicySpec`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "conucb")]
    Conucb,
    #[serde(rename = "linucb")]
    Linucb,
    #[serde(rename = "armcon")]
    ArmCon,
    #[serde(rename = "var-rs")]
    VarRs,
    #[serde(rename = "var-mrc")]
    VarMrc,
    #[serde(rename = "var-lcr")]
    VarLcr,
    #[serde(rename = "hlinucb")]
    HLinucb,
    #[serde(rename = "hconucb")]
    HConucb,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Conucb => "conucb",
            PolicyKind::Linucb => "linucb",
            PolicyKind::ArmCon => "armcon",
            PolicyKind::VarRs => "var-rs",
            PolicyKind::VarMrc => "var-mrc",
            PolicyKind::VarLcr => "var-lcr",
            PolicyKind::HLinucb => "hlinucb",
            PolicyKind::HConucb => "hconucb",
        }
    }

    /// Policies whose widths use the key-term confidence machinery.
    pub fn is_conversational_ucb(self) -> bool {
        matches!(
            self,
            PolicyKind::Conucb | PolicyKind::VarRs | PolicyKind::VarMrc | PolicyKind::VarLcr
        )
    }

    fn is_hidden(self) -> bool {
        matches!(self, PolicyKind::HLinucb | PolicyKind::HConucb)
    }
}

/// One policy entry of an experiment: a kind plus optional hyperparameter
/// overrides. Unset fields keep the policy's defaults; the run supplies the
/// per-user preference norm and the hidden-feature init seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Report label; defaults to the kind's name. Give distinct labels when
    /// one kind appears twice with different parameters.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_tilde: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub ridge: Option<f64>,
    /// Fixed arm exploration coefficient instead of the theoretical one.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Fixed key-term exploration coefficient instead of the theoretical one.
    #[serde(default)]
    pub alpha_tilde: Option<f64>,
    /// Hidden feature count; required for (and exclusive to) hidden kinds.
    #[serde(default)]
    pub hidden_dim: Option<usize>,
    #[serde(default)]
    pub hidden_ridge: Option<f64>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            label: None,
            lambda: None,
            lambda_tilde: None,
            sigma: None,
            ridge: None,
            alpha: None,
            alpha_tilde: None,
            hidden_dim: None,
            hidden_ridge: None,
        }
    }

    pub fn display_label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.kind.label().to_string())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::Config(format!(
                    "policy {}: lambda must lie strictly inside (0, 1), got {l}",
                    self.display_label()
                )));
            }
        }
        if let Some(lt) = self.lambda_tilde {
            if !(lt > 0.0) {
                return Err(Error::Config(format!(
                    "policy {}: lambda_tilde must be positive, got {lt}",
                    self.display_label()
                )));
            }
        }
        if self.kind.is_hidden() {
            if self.hidden_dim.is_none() {
                return Err(Error::Config(format!(
                    "policy {}: hidden policies need hidden_dim",
                    self.display_label()
                )));
            }
        } else if self.hidden_dim.is_some() || self.hidden_ridge.is_some() {
            return Err(Error::Config(format!(
                "policy {}: hidden_dim/hidden_ridge only apply to hidden policies",
                self.display_label()
            )));
        }
        Ok(())
    }

    /// Builds the policy for one episode. `theta_tilde_star_norm` is the
    /// episode user's true preference norm (used by theoretical widths);
    /// `init_seed` seeds hidden-feature initialization.
    pub fn build(
        &self,
        dim: usize,
        theta_tilde_star_norm: f64,
        init_seed: u64,
    ) -> Result<Box<dyn Policy>> {
        match self.kind {
            PolicyKind::Conucb | PolicyKind::VarRs | PolicyKind::VarMrc | PolicyKind::VarLcr => {
                let mut p = ConUcbParams::new(dim);
                if let Some(v) = self.lambda {
                    p.lambda = v;
                }
                if let Some(v) = self.lambda_tilde {
                    p.lambda_tilde = v;
                }
                if let Some(v) = self.sigma {
                    p.sigma = v;
                }
                p.theta_tilde_star_norm = theta_tilde_star_norm;
                p.alpha = self.alpha;
                p.alpha_tilde = self.alpha_tilde;
                Ok(match self.kind {
                    PolicyKind::Conucb => Box::new(ConUcb::new(p)?),
                    PolicyKind::VarRs => Box::new(VarRs::new(p)?),
                    PolicyKind::VarMrc => Box::new(VarMrc::new(p)?),
                    _ => Box::new(VarLcr::new(p)?),
                })
            }
            PolicyKind::Linucb | PolicyKind::ArmCon => {
                let mut p = LinUcbParams::new(dim);
                if let Some(v) = self.ridge {
                    p.ridge = v;
                }
                if let Some(v) = self.sigma {
                    p.sigma = v;
                }
                p.alpha = self.alpha;
                Ok(if self.kind == PolicyKind::Linucb {
                    Box::new(LinUcb::new(p)?)
                } else {
                    Box::new(ArmCon::new(p)?)
                })
            }
            PolicyKind::HLinucb | PolicyKind::HConucb => {
                let l = self.hidden_dim.expect("validated");
                let mut p = HiddenParams::new(dim, l);
                if let Some(v) = self.lambda {
                    p.lambda = v;
                }
                if let Some(v) = self.lambda_tilde {
                    p.lambda_tilde = v;
                }
                if let Some(v) = self.sigma {
                    p.sigma = v;
                }
                if let Some(v) = self.ridge {
                    p.ridge = v;
                }
                if let Some(v) = self.hidden_ridge {
                    p.ridge_hidden = v;
                }
                p.theta_tilde_star_norm = theta_tilde_star_norm;
                p.alpha = self.alpha;
                p.alpha_tilde = self.alpha_tilde;
                p.init_seed = init_seed;
                Ok(if self.kind == PolicyKind::HLinucb {
                    Box::new(HLinUcb::new(p)?)
                } else {
                    Box::new(HConUcb::new(p)?)
                })
            }
        }
    }
}

/// A full benchmark description; serializable as the run's config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub world: WorldParams,
    pub world_seed: u64,
    pub policies: Vec<PolicySpec>,
    pub schedule: ConversationSchedule,
    /// Rounds per episode.
    pub horizon: usize,
    /// Arms shown per round.
    pub slate_size: usize,
    /// Users per seed (ids 0..users).
    pub users: usize,
    pub seeds: Vec<u64>,
    /// When set, policies see only this many leading feature coordinates;
    /// rewards still come from the full vectors.
    #[serde(default)]
    pub observable_dim: Option<usize>,
    /// Emit the theoretical regret-bound series alongside the empirical
    /// one. Requires a key-term-querying UCB policy in the list and its
    /// (lambda, lambda_tilde) to satisfy the bound's assumptions.
    #[serde(default)]
    pub report_bound: bool,
    /// Default output directory; a CLI `--out` overrides it.
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Smallest admissible key-term regularizer for the regret bound at a given
/// lambda: `2(1-λ) / (λ(1-√λ)²)`.
pub fn bound_minimum_lambda_tilde(lambda: f64) -> f64 {
    let s = 1.0 - lambda.sqrt();
    2.0 * (1.0 - lambda) / (lambda * s * s)
}

impl ExperimentConfig {
    fn stock(world: WorldParams, users: usize) -> Self {
        ExperimentConfig {
            world,
            world_seed: 2024,
            policies: vec![
                PolicySpec::new(PolicyKind::Conucb),
                PolicySpec::new(PolicyKind::Linucb),
                PolicySpec::new(PolicyKind::ArmCon),
                PolicySpec::new(PolicyKind::VarRs),
                PolicySpec::new(PolicyKind::VarMrc),
                PolicySpec::new(PolicyKind::VarLcr),
            ],
            schedule: ConversationSchedule::Log { q_l: 5 },
            horizon: 2000,
            slate_size: 50,
            users,
            seeds: (0..10).collect(),
            observable_dim: None,
            report_bound: false,
            out_dir: None,
        }
    }

    /// All six policies on a scaled-down world; finishes in minutes on one
    /// core while preserving the qualitative orderings.
    pub fn desk_scale() -> Self {
        ExperimentConfig::stock(
            WorldParams {
                dim: 20,
                num_arms: 1000,
                num_keyterms: 100,
                num_users: 20,
                max_keyterms_per_arm: 5,
                noise_std: 0.1,
            },
            20,
        )
    }

    /// The full-size synthetic setup (d=50, 5000 arms, 500 key-terms, 200
    /// users); expect hours, not minutes.
    pub fn paper_scale() -> Self {
        ExperimentConfig::stock(
            WorldParams {
                dim: 50,
                num_arms: 5000,
                num_keyterms: 500,
                num_users: 200,
                max_keyterms_per_arm: 5,
                noise_std: 0.1,
            },
            200,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.schedule.validate()?;
        if self.policies.is_empty() {
            return Err(Error::Config("experiment needs at least one policy".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one seed".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.slate_size == 0 || self.slate_size > self.world.num_arms {
            return Err(Error::Config(format!(
                "slate size must be in 1..={}, got {}",
                self.world.num_arms, self.slate_size
            )));
        }
        if self.users == 0 || self.users > self.world.num_users {
            return Err(Error::Config(format!(
                "users must be in 1..={}, got {}",
                self.world.num_users, self.users
            )));
        }
        if let Some(od) = self.observable_dim {
            if od == 0 || od >= self.world.dim {
                return Err(Error::Config(format!(
                    "observable_dim must be in 1..{}, got {od}",
                    self.world.dim
                )));
            }
        }
        let mut labels = std::collections::BTreeSet::new();
        for spec in &self.policies {
            spec.validate()?;
            if !labels.insert(spec.display_label()) {
                return Err(Error::Config(format!(
                    "duplicate policy label {:?}; set distinct labels",
                    spec.display_label()
                )));
            }
        }
        if self.report_bound {
            let spec = self.bound_policy().ok_or_else(|| {
                Error::Config(
                    "bound reporting needs a key-term-querying UCB policy in the list".into(),
                )
            })?;
            let lambda = spec.lambda.unwrap_or(ConUcbParams::new(1).lambda);
            if !(lambda > 0.0 && lambda <= 0.5) {
                return Err(Error::Config(format!(
                    "bound reporting requires lambda in (0, 0.5], got {lambda}"
                )));
            }
            let lt = spec
                .lambda_tilde
                .unwrap_or(ConUcbParams::new(1).lambda_tilde);
            let floor = bound_minimum_lambda_tilde(lambda);
            if lt < floor {
                return Err(Error::Config(format!(
                    "bound reporting requires lambda_tilde >= {floor:.4}, got {lt}"
                )));
            }
        }
        Ok(())
    }

    /// The policy whose parameters feed the bound series: the first
    /// key-term-querying UCB entry.
    fn bound_policy(&self) -> Option<&PolicySpec> {
        self.policies
            .iter()
            .find(|s| s.kind.is_conversational_ucb())
    }
}

/// Mean/std of one metric at one round over all episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStat {
    pub round: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Final cumulative regret of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub user: usize,
    pub final_regret: f64,
}

/// Aggregated results of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport {
    pub policy: String,
    /// Cumulative regret per round.
    pub regret: Vec<SeriesStat>,
    /// Parameter error every [`PARAMETER_ERROR_INTERVAL`] rounds.
    pub parameter_error: Vec<SeriesStat>,
    /// Per-episode final regrets in canonical (seed, user) order.
    pub episodes: Vec<EpisodeOutcome>,
}

impl PolicyReport {
    pub fn final_regret_mean(&self) -> f64 {
        self.regret.last().map(|s| s.mean).unwrap_or(0.0)
    }

    pub fn final_parameter_error_mean(&self) -> Option<f64> {
        self.parameter_error.last().map(|s| s.mean)
    }

    /// Mean final regret per seed (over that seed's users), sorted by seed.
    pub fn final_regret_by_seed(&self) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64, usize)> = Vec::new();
        for ep in &self.episodes {
            match out.last_mut() {
                Some((s, sum, n)) if *s == ep.seed => {
                    *sum += ep.final_regret;
                    *n += 1;
                }
                _ => out.push((ep.seed, ep.final_regret, 1)),
            }
        }
        out.into_iter()
            .map(|(s, sum, n)| (s, sum / n as f64))
            .collect()
    }
}

/// Everything a benchmark run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub config: ExperimentConfig,
    pub policies: Vec<PolicyReport>,
    /// Theoretical regret-bound value per round, when requested.
    pub bound: Option<Vec<f64>>,
}

impl AggregateReport {
    pub fn policy(&self, label: &str) -> Option<&PolicyReport> {
        self.policies.iter().find(|p| p.policy == label)
    }
}

/// Evaluates the regret upper bound per round `t = 1..=horizon`:
///
/// ```text
/// 2(√λ·√(d·ln((1 + λt/((1-λ)d))/σ)) + 2√((1-λ)/λ)·‖θ̃*‖
///    + (1-√λ)·√(d·ln6 + ln(2b(t)/σ))) · √(t·d·ln(1 + λt/(d(1-λ))))
/// ```
///
/// `b(t)` is the conversation budget through round `t`; its log is floored
/// at zero (rounds before the first conversation would otherwise push the
/// term to -∞). Valid for λ ∈ (0, 0.5].
pub fn theorem_regret_bound(
    lambda: f64,
    sigma: f64,
    dim: usize,
    theta_tilde_star_norm: f64,
    schedule: &ConversationSchedule,
    horizon: usize,
) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda <= 0.5) {
        return Err(Error::Config(format!(
            "regret bound holds for lambda in (0, 0.5], got {lambda}"
        )));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Config(format!(
            "regret bound needs failure probability sigma in (0, 1), got {sigma}"
        )));
    }
    if dim == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    schedule.validate()?;
    let d = dim as f64;
    let explore_term = 2.0 * ((1.0 - lambda) / lambda).sqrt() * theta_tilde_star_norm;
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let tf = t as f64;
        let arm_term =
            lambda.sqrt() * (d * ((1.0 + lambda * tf / ((1.0 - lambda) * d)) / sigma).ln()).sqrt();
        let b_t = schedule.b(t) as f64;
        let keyterm_log = (2.0 * b_t / sigma).ln().max(0.0);
        let keyterm_term = (1.0 - lambda.sqrt()) * (d * 6f64.ln() + keyterm_log).sqrt();
        let tail = (tf * d * (1.0 + lambda * tf / (d * (1.0 - lambda))).ln()).sqrt();
        out.push(2.0 * (arm_term + explore_term + keyterm_term) * tail);
    }
    Ok(out)
}

/// Runs every (policy, seed, user) episode and aggregates. For one (seed,
/// user) pair all policies play the identical script; the policy RNG stream
/// is shared across policies as well, so identically configured policies
/// trace identically. Episodes run on a worker pool; collection order is
/// fixed by the job list, so parallelism does not affect the result.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<AggregateReport> {
    use rayon::prelude::*;

    config.validate()?;
    let world = generate_world(&config.world, config.world_seed)?;
    let dim = config.observable_dim.unwrap_or(world.dim());

    // Canonical episode order: seeds ascending, users ascending.
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&seed| (0..config.users).map(move |user| (seed, user)))
        .collect();

    let episodes: Vec<(u64, usize, Vec<EpisodeTrace>)> = jobs
        .into_par_iter()
        .map(|(seed, user)| {
            let script =
                script_episode(&world, user, 0, seed, config.horizon, config.slate_size)?;
            let norm = norm2(world.user_preference(user));
            let init_seed = derive_seed(seed, user, 0, SeedStream::Policy);
            let mut per_policy = Vec::with_capacity(config.policies.len());
            for spec in &config.policies {
                let mut policy = spec.build(dim, norm, init_seed)?;
                let mut rng = stream_rng(seed, user, 0, SeedStream::Policy);
                let trace = match config.observable_dim {
                    Some(od) => run_hidden_episode(
                        policy.as_mut(),
                        &world,
                        &script,
                        &config.schedule,
                        &mut rng,
                        od,
                    )?,
                    None => {
                        run_episode(policy.as_mut(), &world, &script, &config.schedule, &mut rng)?
                    }
                };
                per_policy.push(trace);
            }
            Ok((seed, user, per_policy))
        })
        .collect::<Result<_>>()?;

    let mut traces: Vec<Vec<(u64, usize, EpisodeTrace)>> =
        (0..config.policies.len()).map(|_| Vec::new()).collect();
    for (seed, user, per_policy) in episodes {
        for (pi, trace) in per_policy.into_iter().enumerate() {
            traces[pi].push((seed, user, trace));
        }
    }

    let mut policies = Vec::with_capacity(config.policies.len());
    for (spec, episodes) in config.policies.iter().zip(traces) {
        let regret_rounds: Vec<usize> = (1..=config.horizon).collect();
        let regret_series: Vec<&[f64]> = episodes
            .iter()
            .map(|(_, _, t)| t.cumulative_regret.as_slice())
            .collect();
        let regret = aggregate_series(&regret_rounds, &regret_series);

        let error_rounds: Vec<usize> = (1..=config.horizon / PARAMETER_ERROR_INTERVAL)
            .map(|i| i * PARAMETER_ERROR_INTERVAL)
            .collect();
        let error_values: Vec<Vec<f64>> = episodes
            .iter()
            .map(|(_, _, t)| t.parameter_errors.iter().map(|s| s.error).collect())
            .collect();
        let error_refs: Vec<&[f64]> = error_values.iter().map(Vec::as_slice).collect();
        let parameter_error = aggregate_series(&error_rounds, &error_refs);

        let outcomes = episodes
            .iter()
            .map(|(seed, user, t)| EpisodeOutcome {
                seed: *seed,
                user: *user,
                final_regret: t.final_regret(),
            })
            .collect();
        policies.push(PolicyReport {
            policy: spec.display_label(),
            regret,
            parameter_error,
            episodes: outcomes,
        });
    }

    let bound = if config.report_bound {
        let spec = config.bound_policy().expect("validated");
        let defaults = ConUcbParams::new(dim);
        let lambda = spec.lambda.unwrap_or(defaults.lambda);
        let sigma = spec.sigma.unwrap_or(defaults.sigma);
        // The bound must cover every user in the run.
        let max_norm = (0..config.users)
            .map(|u| norm2(world.user_preference(u)))
            .fold(0.0, f64::max);
        Some(theorem_regret_bound(
            lambda,
            sigma,
            dim,
            max_norm,
            &config.schedule,
            config.horizon,
        )?)
    } else {
        None
    };

    Ok(AggregateReport {
        config: config.clone(),
        policies,
        bound,
    })
}

/// Mean/std per round over episodes. Episodes must already be in canonical
/// order so the fold order (and thus the float result) is reproducible.
fn aggregate_series(rounds: &[usize], episodes: &[&[f64]]) -> Vec<SeriesStat> {
    let n = episodes.len();
    rounds
        .iter()
        .enumerate()
        .map(|(i, &round)| {
            let mean = episodes.iter().map(|e| e[i]).sum::<f64>() / n as f64;
            let std = if n > 1 {
                let ss = episodes
                    .iter()
                    .map(|e| {
                        let gap = e[i] - mean;
                        gap * gap
                    })
                    .sum::<f64>();
                (ss / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SeriesStat {
                round,
                mean,
                std,
                n,
            }
        })
        .collect()
}

/// Turns one metric into `round,policy,mean,std,n` CSV text, policies in
/// report order.
fn series_csv(
    select: impl Fn(&PolicyReport) -> &[SeriesStat],
    policies: &[PolicyReport],
) -> String {
    let mut out = String::from("round,policy,mean,std,n\n");
    for p in policies {
        for s in select(p) {
            writeln!(out, "{},{},{},{},{}", s.round, p.policy, s.mean, s.std, s.n)
                .expect("string write cannot fail");
        }
    }
    out
}

impl AggregateReport {
    /// Writes `regret.csv`, `parameter_error.csv`, `bound.csv` (when the
    /// bound was computed), and `manifest.json` into `dir`. Returns the
    /// paths written. Identical reports produce byte-identical files.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();

        let regret_path = dir.join("regret.csv");
        std::fs::write(&regret_path, series_csv(|p| &p.regret, &self.policies))
            .map_err(|e| Error::io(&regret_path, e))?;
        written.push(regret_path);

        let error_path = dir.join("parameter_error.csv");
        std::fs::write(
            &error_path,
            series_csv(|p| &p.parameter_error, &self.policies),
        )
        .map_err(|e| Error::io(&error_path, e))?;
        written.push(error_path);

        if let Some(bound) = &self.bound {
            let mut out = String::from("round,policy,mean,std,n\n");
            for (i, v) in bound.iter().enumerate() {
                writeln!(out, "{},regret-bound,{},0,1", i + 1, v).expect("string write cannot fail");
            }
            let bound_path = dir.join("bound.csv");
            std::fs::write(&bound_path, out).map_err(|e| Error::io(&bound_path, e))?;
            written.push(bound_path);
        }

        let manifest = serde_json::json!({
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "policies": self.policies.iter().map(|p| p.policy.clone()).collect::<Vec<_>>(),
            "episodes_per_policy": self.policies.first().map(|p| p.episodes.len()).unwrap_or(0),
            "files": ["regret.csv", "parameter_error.csv"],
        });
        let manifest_path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("config serializes");
        std::fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        written.push(manifest_path);
        Ok(written)
    }
}

/// One schedule's aggregate within a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub schedule: ConversationSchedule,
    pub report: AggregateReport,
}

/// Results of running one config across several conversation schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    /// Final mean regret per (schedule, policy).
    pub fn final_regrets(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for e in &self.entries {
            for p in &e.report.policies {
                out.push((e.schedule.label(), p.policy.clone(), p.final_regret_mean()));
            }
        }
        out
    }

    /// Writes the comparison table plus one subdirectory of full outputs
    /// per schedule (colons in labels become dashes).
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut table = String::from("schedule,policy,final_regret_mean,final_regret_std,n\n");
        for e in &self.entries {
            for p in &e.report.policies {
                let last = p.regret.last();
                let (mean, std, n) = last.map(|s| (s.mean, s.std, s.n)).unwrap_or((0.0, 0.0, 0));
                writeln!(table, "{},{},{},{},{}", e.schedule.label(), p.policy, mean, std, n)
                    .expect("string write cannot fail");
            }
            let sub = dir.join(e.schedule.label().replace(':', "-"));
            written.extend(e.report.write_outputs(&sub)?);
        }
        let table_path = dir.join("sweep.csv");
        std::fs::write(&table_path, table).map_err(|e| Error::io(&table_path, e))?;
        written.push(table_path);
        Ok(written)
    }
}

/// Runs the same experiment once per schedule.
pub fn sweep_schedules(
    config: &ExperimentConfig,
    schedules: &[ConversationSchedule],
) -> Result<SweepReport> {
    if schedules.is_empty() {
        return Err(Error::Config("sweep needs at least one schedule".into()));
    }
    let mut entries = Vec::with_capacity(schedules.len());
    for &schedule in schedules {
        let mut c = config.clone();
        c.schedule = schedule;
        entries.push(SweepEntry {
            schedule,
            report: run_benchmark(&c)?,
        });
    }
    Ok(SweepReport { entries })
}

/// Reads a `round,policy,mean,std,n` CSV back into per-policy series, in
/// file order. The inverse of the writers here, for re-aggregation.
pub fn read_series_csv(path: &Path) -> Result<Vec<(String, Vec<SeriesStat>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "round,policy,mean,std,n" => {}
        _ => {
            return Err(Error::load(path, 1, "expected header `round,policy,mean,std,n`"));
        }
    }
    let mut out: Vec<(String, Vec<SeriesStat>)> = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let parsed = (|| {
            let [round, policy, mean, std, n] = fields.as_slice() else {
                return None;
            };
            Some((
                round.trim().parse::<usize>().ok()?,
                policy.trim().to_string(),
                mean.trim().parse::<f64>().ok()?,
                std.trim().parse::<f64>().ok()?,
                n.trim().parse::<usize>().ok()?,
            ))
        })()
        .ok_or_else(|| Error::load(path, lineno, "expected `round,policy,mean,std,n`"))?;
        let (round, policy, mean, std, n) = parsed;
        let stat = SeriesStat {
            round,
            mean,
            std,
            n,
        };
        match out.last_mut() {
            Some((p, series)) if *p == policy => series.push(stat),
            _ => out.push((policy, vec![stat])),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            world: WorldParams {
                dim: 6,
                num_arms: 30,
                num_keyterms: 10,
                num_users: 4,
                max_keyterms_per_arm: 3,
                noise_std: 0.1,
            },
            world_seed: 5,
            policies: vec![
                PolicySpec::new(PolicyKind::Conucb),
                PolicySpec::new(PolicyKind::Linucb),
            ],
            schedule: ConversationSchedule::Log { q_l: 2 },
            horizon: 80,
            slate_size: 6,
            users: 2,
            seeds: vec![3, 9],
            observable_dim: None,
            report_bound: false,
            out_dir: None,
        }
    }

    #[test]
    fn config_validation_catches_bad_setups() {
        let mut c = tiny_config();
        c.seeds.clear();
        assert!(c.validate().is_err());

        let mut c = tiny_config();
        c.policies.clear();
        assert!(c.validate().is_err());

        let mut c = tiny_config();
        c.policies[0].lambda = Some(1.2);
        assert!(c.validate().is_err());

        let mut c = tiny_config();
        c.policies[1].hidden_dim = Some(2);
        assert!(c.validate().is_err());

        let mut c = tiny_config();
        c.policies.push(PolicySpec::new(PolicyKind::Conucb));
        assert!(c.validate().is_err(), "duplicate labels must be rejected");

        let mut c = tiny_config();
        c.slate_size = 31;
        assert!(c.validate().is_err());

        // Bound reporting enforces the (lambda, lambda_tilde) assumptions.
        let mut c = tiny_config();
        c.report_bound = true;
        assert!(c.validate().is_err(), "default lambda_tilde is below the floor");
        c.policies[0].lambda_tilde = Some(bound_minimum_lambda_tilde(0.5) + 0.01);
        assert!(c.validate().is_ok());
        c.policies[0].lambda = Some(0.6);
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_policy_single_seed_minimal_run() {
        let mut c = tiny_config();
        c.policies = vec![PolicySpec::new(PolicyKind::Linucb)];
        c.seeds = vec![1];
        c.users = 1;
        c.horizon = 1;
        c.schedule = ConversationSchedule::None;
        let report = run_benchmark(&c).unwrap();
        assert_eq!(report.policies.len(), 1);
        let p = &report.policies[0];
        assert_eq!(p.regret.len(), 1);
        assert_eq!(p.regret[0].n, 1);
        assert_eq!(p.regret[0].std, 0.0);
        assert!(p.parameter_error.is_empty());
        assert_eq!(p.episodes.len(), 1);
    }

    #[test]
    fn identical_specs_share_scripts_and_trace_identically() {
        let mut c = tiny_config();
        let mut twin = PolicySpec::new(PolicyKind::Conucb);
        twin.label = Some("conucb-twin".into());
        c.policies = vec![PolicySpec::new(PolicyKind::Conucb), twin];
        let report = run_benchmark(&c).unwrap();
        let a = &report.policies[0];
        let b = &report.policies[1];
        assert_eq!(a.regret, b.regret);
        assert_eq!(a.episodes.len(), b.episodes.len());
        for (x, y) in a.episodes.iter().zip(&b.episodes) {
            assert_eq!(x.final_regret, y.final_regret);
        }
    }

    #[test]
    fn reruns_and_seed_permutations_emit_identical_bytes() {
        let c = tiny_config();
        let dir = tempfile::tempdir().unwrap();

        let r1 = run_benchmark(&c).unwrap();
        let d1 = dir.path().join("a");
        r1.write_outputs(&d1).unwrap();

        let r2 = run_benchmark(&c).unwrap();
        let d2 = dir.path().join("b");
        r2.write_outputs(&d2).unwrap();

        let mut c3 = c.clone();
        c3.seeds = vec![9, 3];
        let r3 = run_benchmark(&c3).unwrap();
        let d3 = dir.path().join("c");
        r3.write_outputs(&d3).unwrap();

        for file in ["regret.csv", "parameter_error.csv"] {
            let b1 = std::fs::read(d1.join(file)).unwrap();
            let b2 = std::fs::read(d2.join(file)).unwrap();
            let b3 = std::fs::read(d3.join(file)).unwrap();
            assert_eq!(b1, b2, "{file} differs between reruns");
            assert_eq!(b1, b3, "{file} depends on seed order");
        }
        assert_eq!(r1, r2);
    }

    #[test]
    fn regret_bound_is_monotone_and_validated() {
        let schedule = ConversationSchedule::Log { q_l: 5 };
        let bound = theorem_regret_bound(0.5, 0.1, 10, 2.0, &schedule, 300).unwrap();
        assert_eq!(bound.len(), 300);
        assert!(bound[0] > 0.0);
        assert!(bound.windows(2).all(|w| w[1] >= w[0]), "bound must be nondecreasing");

        assert!(theorem_regret_bound(0.6, 0.1, 10, 2.0, &schedule, 10).is_err());
        assert!(theorem_regret_bound(0.5, 1.5, 10, 2.0, &schedule, 10).is_err());

        // Zero-budget rounds must not produce NaN (log floored at zero).
        let none = theorem_regret_bound(0.5, 0.1, 10, 2.0, &ConversationSchedule::None, 50)
            .unwrap();
        assert!(none.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn benchmark_emits_bound_series_when_requested() {
        let mut c = tiny_config();
        c.report_bound = true;
        c.policies[0].lambda_tilde = Some(24.0);
        let report = run_benchmark(&c).unwrap();
        let bound = report.bound.as_ref().unwrap();
        assert_eq!(bound.len(), c.horizon);

        let dir = tempfile::tempdir().unwrap();
        let files = report.write_outputs(dir.path()).unwrap();
        assert!(files.iter().any(|p| p.ends_with("bound.csv")));
    }

    #[test]
    fn sweep_runs_each_schedule() {
        let mut c = tiny_config();
        c.horizon = 40;
        c.users = 1;
        c.seeds = vec![2];
        let schedules = vec![
            ConversationSchedule::None,
            ConversationSchedule::Log { q_l: 1 },
        ];
        let sweep = sweep_schedules(&c, &schedules).unwrap();
        assert_eq!(sweep.entries.len(), 2);
        assert_eq!(sweep.final_regrets().len(), 4);

        let dir = tempfile::tempdir().unwrap();
        sweep.write_outputs(dir.path()).unwrap();
        assert!(dir.path().join("sweep.csv").exists());
        assert!(dir.path().join("none").join("regret.csv").exists());
        assert!(dir.path().join("log-1").join("regret.csv").exists());
    }

    #[test]
    fn series_csv_round_trips() {
        let mut c = tiny_config();
        c.horizon = 60;
        c.users = 1;
        c.seeds = vec![4];
        let report = run_benchmark(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write_outputs(dir.path()).unwrap();

        let series = read_series_csv(&dir.path().join("regret.csv")).unwrap();
        assert_eq!(series.len(), report.policies.len());
        for (parsed, original) in series.iter().zip(&report.policies) {
            assert_eq!(parsed.0, original.policy);
            assert_eq!(parsed.1, original.regret);
        }
        assert!(read_series_csv(&dir.path().join("manifest.json")).is_err());
    }

    #[test]
    fn hidden_policies_run_under_observable_truncation() {
        let mut c = tiny_config();
        c.observable_dim = Some(4);
        c.horizon = 40;
        c.users = 1;
        c.seeds = vec![6];
        let mut hlin = PolicySpec::new(PolicyKind::HLinucb);
        hlin.hidden_dim = Some(2);
        let mut hcon = PolicySpec::new(PolicyKind::HConucb);
        hcon.hidden_dim = Some(2);
        c.policies = vec![hlin, hcon];
        let report = run_benchmark(&c).unwrap();
        assert_eq!(report.policies.len(), 2);
        for p in &report.policies {
            assert_eq!(p.regret.len(), 40);
            assert!(p.regret.last().unwrap().mean >= 0.0);
        }
    }
}
