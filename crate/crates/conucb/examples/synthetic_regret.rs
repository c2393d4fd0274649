//! Compares all six policies on one synthetic world and prints the final
//! cumulative regret table. Exploration coefficients are fixed at values
//! that work well at this scale; pass `--theoretical` to use the formula
//! widths instead and see how much more conservative they are.

use conucb::bench::{run_benchmark, ExperimentConfig, PolicyKind, PolicySpec};
use conucb::schedule::ConversationSchedule;
use conucb::sim::WorldParams;

fn main() -> conucb::Result<()> {
    let theoretical = std::env::args().any(|a| a == "--theoretical");

    let mut policies = Vec::new();
    for kind in [
        PolicyKind::Conucb,
        PolicyKind::Linucb,
        PolicyKind::ArmCon,
        PolicyKind::VarRs,
        PolicyKind::VarMrc,
        PolicyKind::VarLcr,
    ] {
        let mut spec = PolicySpec::new(kind);
        if !theoretical {
            spec.alpha = Some(0.25);
            spec.alpha_tilde = Some(0.25);
            if !kind.is_conversational_ucb() {
                spec.alpha_tilde = None;
            }
        }
        policies.push(spec);
    }

    let config = ExperimentConfig {
        world: WorldParams {
            dim: 10,
            num_arms: 200,
            num_keyterms: 40,
            num_users: 10,
            max_keyterms_per_arm: 4,
            noise_std: 0.1,
        },
        world_seed: 7,
        policies,
        schedule: ConversationSchedule::Log { q_l: 5 },
        horizon: 600,
        slate_size: 20,
        users: 5,
        seeds: vec![0, 1],
        observable_dim: None,
        report_bound: false,
        out_dir: None,
    };

    let report = run_benchmark(&config)?;
    println!(
        "{} widths, schedule {}, T={}, {} episodes per policy\n",
        if theoretical { "formula" } else { "fixed" },
        config.schedule.label(),
        config.horizon,
        config.users * config.seeds.len(),
    );
    println!("policy     regret @150   @600");
    for p in &report.policies {
        let at = |round: usize| p.regret[round - 1].mean;
        println!("{:<10} {:>10.2} {:>6.2}", p.policy, at(150), at(600));
    }
    Ok(())
}
