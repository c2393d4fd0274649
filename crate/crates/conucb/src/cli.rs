//! Command-line interface: world generation, benchmark runs, offline
//! replay, schedule sweeps, and report re-aggregation.
//!
//! Each subcommand handler returns the human-readable summary the binary
//! prints; files land in the `--out` directory (default `out`). A JSON
//! config file carries the full experiment description; command-line flags
//! override individual fields of it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    read_series_csv, run_benchmark, sweep_schedules, AggregateReport, ExperimentConfig,
    PolicyKind, PolicySpec,
};
use crate::error::{Error, Result};
use crate::replay::{build_pools, replay, FeedbackMode, LoggedDataset, ReplayConfig};
use crate::schedule::ConversationSchedule;
use crate::sim::{derive_seed, generate_world, stream_rng, SeedStream, WorldParams};

#[derive(Debug, Parser)]
#[command(
    name = "conucb",
    version,
    about = "Conversational contextual bandit benchmarks"
)]
pub struct Cli {
    /// Master seed; `run` and `sweep` replace the config's seed list with
    /// this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Also print per-round series checkpoints.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world and write its feature tables and graph.
    Generate(GenerateArgs),
    /// Run a multi-policy benchmark and write metric CSVs.
    Run(RunArgs),
    /// Replay a logged dataset through one policy.
    Replay(ReplayArgs),
    /// Run one benchmark config across several conversation schedules.
    Sweep(SweepArgs),
    /// Re-aggregate a metric CSV into a final-round summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub arms: usize,
    #[arg(long, default_value_t = 100)]
    pub keyterms: usize,
    #[arg(long, default_value_t = 20)]
    pub users: usize,
    #[arg(long, default_value_t = 5)]
    pub max_keyterms_per_arm: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_std: f64,
}

/// Experiment fields shared by `run` and `sweep`. Every flag overrides the
/// matching field of the base config (the `--config` file if given, else
/// the desk-scale default, else `--paper-scale`).
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Start from the full-size synthetic setup instead of the desk-scale
    /// default (expect hours, not minutes).
    #[arg(long, conflicts_with = "config")]
    pub paper_scale: bool,

    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub arms: Option<usize>,
    #[arg(long)]
    pub keyterms: Option<usize>,
    /// Users the world contains.
    #[arg(long)]
    pub world_users: Option<usize>,
    #[arg(long)]
    pub max_keyterms_per_arm: Option<usize>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub world_seed: Option<u64>,

    /// Comma-separated policy kinds, e.g. `conucb,linucb,var-rs`.
    #[arg(long)]
    pub policies: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub slate_size: Option<usize>,
    /// Users each seed simulates.
    #[arg(long)]
    pub users: Option<usize>,
    /// Comma-separated seed list, e.g. `0,1,2`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Restrict policies to this many leading feature coordinates.
    #[arg(long)]
    pub observable_dim: Option<usize>,
    /// Hidden feature count for hlinucb/hconucb entries.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Also emit the theoretical regret-bound series.
    #[arg(long)]
    pub report_bound: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Conversation schedule label: `none`, `log:Q`, or `lin:Q:P`.
    #[arg(long)]
    pub schedule: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated schedule labels, e.g. `log:1,log:5,log:10`.
    #[arg(long)]
    pub schedules: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeedbackArg {
    Continuous,
    Binary,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Logged events CSV: `user, timestamp, arm, reward` rows.
    #[arg(long)]
    pub events: PathBuf,
    /// Arm feature table CSV: `arm, f0, f1, ...` rows.
    #[arg(long)]
    pub features: PathBuf,
    /// Optional arm tag table: `arm, keyterm, keyterm, ...` rows; required
    /// for key-term conversations.
    #[arg(long)]
    pub tags: Option<PathBuf>,

    /// Policy kind to evaluate.
    #[arg(long, default_value = "conucb")]
    pub policy: String,
    #[arg(long, default_value_t = 10)]
    pub pool_size: usize,
    /// Conversation schedule label.
    #[arg(long, default_value = "log:5")]
    pub schedule: String,
    /// Events per CTR window.
    #[arg(long, default_value_t = 500)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = FeedbackArg::Continuous)]
    pub feedback: FeedbackArg,
    /// Ridge weight of the per-user ground-truth fit behind synthesized
    /// conversation answers.
    #[arg(long, default_value_t = 1.0)]
    pub gt_ridge: f64,

    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_tilde: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub alpha_tilde: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metric CSV produced by `run` or `sweep` (`round,policy,mean,std,n`).
    pub input: PathBuf,
}

/// Runs one parsed invocation and returns the summary text to print.
pub fn execute(cli: Cli) -> Result<String> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match &cli.command {
        Command::Generate(args) => generate(args, &cli, &out),
        Command::Run(args) => run(args, &cli, &out),
        Command::Replay(args) => run_replay(args, &cli, &out),
        Command::Sweep(args) => sweep(args, &cli, &out),
        Command::Report(args) => report(args, &cli),
    }
}

fn parse_policy_kind(text: &str) -> Result<PolicyKind> {
    Ok(match text.trim() {
        "conucb" => PolicyKind::Conucb,
        "linucb" => PolicyKind::Linucb,
        "armcon" => PolicyKind::ArmCon,
        "var-rs" => PolicyKind::VarRs,
        "var-mrc" => PolicyKind::VarMrc,
        "var-lcr" => PolicyKind::VarLcr,
        "hlinucb" => PolicyKind::HLinucb,
        "hconucb" => PolicyKind::HConucb,
        other => {
            return Err(Error::Usage(format!(
                "unknown policy {other:?}; expected one of conucb, linucb, armcon, \
                 var-rs, var-mrc, var-lcr, hlinucb, hconucb"
            )))
        }
    })
}

fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Usage(format!("bad seed {s:?}; expected an integer")))
        })
        .collect()
}

/// Resolves the base config and applies flag overrides.
fn build_config(args: &ConfigArgs, cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::load(path, e.line(), e.to_string()))?
        }
        None if args.paper_scale => ExperimentConfig::paper_scale(),
        None => ExperimentConfig::desk_scale(),
    };
    if let Some(v) = args.dim {
        config.world.dim = v;
    }
    if let Some(v) = args.arms {
        config.world.num_arms = v;
    }
    if let Some(v) = args.keyterms {
        config.world.num_keyterms = v;
    }
    if let Some(v) = args.world_users {
        config.world.num_users = v;
    }
    if let Some(v) = args.max_keyterms_per_arm {
        config.world.max_keyterms_per_arm = v;
    }
    if let Some(v) = args.noise_std {
        config.world.noise_std = v;
    }
    if let Some(v) = args.world_seed {
        config.world_seed = v;
    }
    if let Some(list) = &args.policies {
        config.policies = list
            .split(',')
            .map(|kind| Ok(PolicySpec::new(parse_policy_kind(kind)?)))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = args.horizon {
        config.horizon = v;
    }
    if let Some(v) = args.slate_size {
        config.slate_size = v;
    }
    if let Some(v) = args.users {
        config.users = v;
    }
    if let Some(list) = &args.seeds {
        config.seeds = parse_seed_list(list)?;
    }
    if let Some(v) = args.observable_dim {
        config.observable_dim = Some(v);
    }
    if let Some(l) = args.hidden_dim {
        for spec in &mut config.policies {
            if matches!(spec.kind, PolicyKind::HLinucb | PolicyKind::HConucb) {
                spec.hidden_dim = Some(l);
            }
        }
    }
    if args.report_bound {
        config.report_bound = true;
    }
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    Ok(config)
}

fn write_float_table(path: &Path, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    for (id, row) in rows.enumerate() {
        write!(out, "{id}").expect("string write cannot fail");
        for v in row {
            write!(out, ", {v}").expect("string write cannot fail");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn generate(args: &GenerateArgs, cli: &Cli, out: &Path) -> Result<String> {
    let params = WorldParams {
        dim: args.dim,
        num_arms: args.arms,
        num_keyterms: args.keyterms,
        num_users: args.users,
        max_keyterms_per_arm: args.max_keyterms_per_arm,
        noise_std: args.noise_std,
    };
    let seed = cli.seed.unwrap_or(0);
    let world = generate_world(&params, seed)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join("world.json");
    let manifest = serde_json::json!({ "params": params, "seed": seed });
    let text = serde_json::to_string_pretty(&manifest).expect("params serialize");
    std::fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    world.graph().save(&out.join("graph.tsv"))?;
    write_float_table(
        &out.join("arm_features.csv"),
        (0..params.num_arms).map(|a| world.arm_feature(a).to_vec()),
    )?;
    write_float_table(
        &out.join("keyterm_features.csv"),
        (0..params.num_keyterms).map(|k| world.keyterm_feature(k).to_vec()),
    )?;
    write_float_table(
        &out.join("user_preferences.csv"),
        (0..params.num_users).map(|u| world.user_preference(u).to_vec()),
    )?;

    Ok(format!(
        "generated world: {} arms, {} key-terms, {} users, d={} (seed {seed})\n\
         wrote world.json, graph.tsv, arm_features.csv, keyterm_features.csv, \
         user_preferences.csv to {}",
        params.num_arms,
        params.num_keyterms,
        params.num_users,
        params.dim,
        out.display()
    ))
}

/// Final-regret table plus optional per-round checkpoints.
fn summarize_report(report: &AggregateReport, verbose: bool) -> String {
    let mut text = String::from("policy        final regret (mean +/- std)\n");
    for p in &report.policies {
        let last = p.regret.last();
        let (mean, std, n) = last.map(|s| (s.mean, s.std, s.n)).unwrap_or((0.0, 0.0, 0));
        writeln!(text, "{:<13} {mean:.3} +/- {std:.3}  (n={n})", p.policy)
            .expect("string write cannot fail");
    }
    if let (Some(bound), Some(p)) = (&report.bound, report.policies.first()) {
        if let Some(last) = bound.last() {
            writeln!(
                text,
                "regret bound at t={}: {last:.3}",
                p.regret.len()
            )
            .expect("string write cannot fail");
        }
    }
    if verbose {
        text.push_str("\nround checkpoints (mean regret):\n");
        for p in &report.policies {
            write!(text, "{:<13}", p.policy).expect("string write cannot fail");
            let step = (p.regret.len() / 10).max(1);
            for s in p.regret.iter().step_by(step) {
                write!(text, " t{}:{:.1}", s.round, s.mean).expect("string write cannot fail");
            }
            text.push('\n');
        }
    }
    text
}

fn run(args: &RunArgs, cli: &Cli, out: &Path) -> Result<String> {
    let mut config = build_config(&args.config, cli)?;
    if let Some(label) = &args.schedule {
        config.schedule = ConversationSchedule::parse_label(label)?;
    }
    let dir = match (&cli.out, &config.out_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => out.to_path_buf(),
    };
    let report = run_benchmark(&config)?;
    let files = report.write_outputs(&dir)?;
    let mut text = summarize_report(&report, cli.verbose);
    writeln!(text, "\nwrote {} files to {}", files.len(), dir.display())
        .expect("string write cannot fail");
    Ok(text)
}

fn sweep(args: &SweepArgs, cli: &Cli, out: &Path) -> Result<String> {
    let config = build_config(&args.config, cli)?;
    let schedules = args
        .schedules
        .split(',')
        .map(ConversationSchedule::parse_label)
        .collect::<Result<Vec<_>>>()?;
    let sweep = sweep_schedules(&config, &schedules)?;
    sweep.write_outputs(out)?;

    let mut text = String::from("schedule      policy        final regret\n");
    for (schedule, policy, regret) in sweep.final_regrets() {
        writeln!(text, "{schedule:<13} {policy:<13} {regret:.3}")
            .expect("string write cannot fail");
    }
    if cli.verbose {
        for entry in &sweep.entries {
            writeln!(text, "\n[{}]", entry.schedule.label()).expect("string write cannot fail");
            text.push_str(&summarize_report(&entry.report, false));
        }
    }
    writeln!(text, "\nwrote sweep.csv and per-schedule outputs to {}", out.display())
        .expect("string write cannot fail");
    Ok(text)
}

fn run_replay(args: &ReplayArgs, cli: &Cli, out: &Path) -> Result<String> {
    let dataset = LoggedDataset::load(&args.events, &args.features, args.tags.as_deref())?;
    let seed = cli.seed.unwrap_or(0);

    let mut pool_rng = stream_rng(seed, 0, 0, SeedStream::Environment);
    let pools = build_pools(&dataset, args.pool_size, &mut pool_rng)?;

    let mut config = ReplayConfig::new(ConversationSchedule::parse_label(&args.schedule)?);
    config.feedback = match args.feedback {
        FeedbackArg::Continuous => FeedbackMode::Continuous,
        FeedbackArg::Binary => FeedbackMode::Binary,
    };
    config.ground_truth_ridge = args.gt_ridge;
    config.window = args.window;
    config.seed = seed;

    let mut spec = PolicySpec::new(parse_policy_kind(&args.policy)?);
    spec.lambda = args.lambda;
    spec.lambda_tilde = args.lambda_tilde;
    spec.sigma = args.sigma;
    spec.ridge = args.ridge;
    spec.alpha = args.alpha;
    spec.alpha_tilde = args.alpha_tilde;
    spec.validate()?;
    let dim = dataset.dim();
    let report = replay(&dataset, &pools, &config, |user| {
        spec.build(dim, 1.0, derive_seed(seed, user, 0, SeedStream::Policy))
    })?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let csv_path = out.join("replay.csv");
    report.write_csv(&csv_path)?;

    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let mut text = format!(
        "replayed {} events ({} skipped in pooling): {} matches\n\
         logging CTR {:.4}, replay CTR {}, normalized {}\n",
        report.total_events,
        report.skipped_events,
        report.total_matches,
        report.logging_ctr,
        fmt(report.replay_ctr),
        fmt(report.normalized_ctr),
    );
    if cli.verbose {
        text.push_str("window  ctr      normalized\n");
        for w in &report.windows {
            writeln!(
                text,
                "{:<7} {:<8} {}",
                w.window_index,
                fmt(w.ctr),
                fmt(w.normalized_ctr)
            )
            .expect("string write cannot fail");
        }
    }
    writeln!(text, "wrote {}", csv_path.display()).expect("string write cannot fail");
    Ok(text)
}

fn report(args: &ReportArgs, cli: &Cli) -> Result<String> {
    let series = read_series_csv(&args.input)?;
    if series.is_empty() {
        return Err(Error::Usage(format!(
            "{} holds no data rows",
            args.input.display()
        )));
    }
    let mut text = String::from("policy        final round  mean       std        n\n");
    let mut csv = String::from("policy,final_round,mean,std,n\n");
    for (policy, stats) in &series {
        let Some(last) = stats.last() else { continue };
        writeln!(
            text,
            "{policy:<13} {:<12} {:<10.3} {:<10.3} {}",
            last.round, last.mean, last.std, last.n
        )
        .expect("string write cannot fail");
        writeln!(csv, "{policy},{},{},{},{}", last.round, last.mean, last.std, last.n)
            .expect("string write cannot fail");
    }
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join("summary.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        writeln!(text, "\nwrote {}", path.display()).expect("string write cannot fail");
    }
    Ok(text)
}
