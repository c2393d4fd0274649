//! Bandits that learn per-arm hidden features: policies see only the first
//! eight of twelve feature coordinates, and the hidden-feature learners
//! recover the rest through alternating least squares. Conversations help
//! there too.

use conucb::bench::{run_benchmark, ExperimentConfig, PolicyKind, PolicySpec};
use conucb::schedule::ConversationSchedule;
use conucb::sim::WorldParams;

fn main() -> conucb::Result<()> {
    let observable = 8;
    let hidden = 4;

    let mut specs = Vec::new();
    // A plain ridge learner on the truncated features, then the two
    // hidden-feature learners modeling the missing block.
    specs.push(PolicySpec::new(PolicyKind::Linucb));
    for kind in [PolicyKind::HLinucb, PolicyKind::HConucb] {
        let mut s = PolicySpec::new(kind);
        s.hidden_dim = Some(hidden);
        s.alpha = Some(0.25);
        s.alpha_tilde = Some(0.25);
        specs.push(s);
    }

    let config = ExperimentConfig {
        world: WorldParams {
            dim: observable + hidden,
            num_arms: 120,
            num_keyterms: 30,
            num_users: 8,
            max_keyterms_per_arm: 4,
            noise_std: 0.1,
        },
        world_seed: 19,
        policies: specs,
        schedule: ConversationSchedule::Log { q_l: 5 },
        horizon: 500,
        slate_size: 15,
        users: 4,
        seeds: vec![0, 1, 2],
        observable_dim: Some(observable),
        report_bound: false,
        out_dir: None,
    };

    let report = run_benchmark(&config)?;
    println!(
        "true d = {}, observable = {observable}, hidden block = {hidden}\n",
        config.world.dim
    );
    println!("policy    final regret");
    for p in &report.policies {
        println!("{:<9} {:>10.2}", p.policy, p.final_regret_mean());
    }
    println!("\nModeling the unseen block beats ignoring it, and key-term");
    println!("questions sharpen the observable part on top.");
    Ok(())
}
