//! Shows the four key-term question rules disagreeing on one shared state.
//!
//! All four policies watch the same twenty warmup rounds, then each plans
//! one question on the same fresh slate: the trace-minimizing rule, maximal
//! related confidence, largest confidence reduction, and a random draw each
//! pick by different criteria.

use conucb::policy::{ConUcb, ConUcbParams, Policy, Query, VarLcr, VarMrc, VarRs};
use conucb::sim::{generate_world, stream_rng, SeedStream, WorldParams};

fn main() -> conucb::Result<()> {
    let params = WorldParams {
        dim: 6,
        num_arms: 60,
        num_keyterms: 15,
        num_users: 3,
        max_keyterms_per_arm: 3,
        noise_std: 0.1,
    };
    let world = generate_world(&params, 11)?;
    let user = 0;

    let p = ConUcbParams::new(params.dim);
    let mut policies: Vec<(&str, Box<dyn Policy>)> = vec![
        ("trace-minimizing", Box::new(ConUcb::new(p.clone())?)),
        ("random", Box::new(VarRs::new(p.clone())?)),
        ("max related confidence", Box::new(VarMrc::new(p.clone())?)),
        ("max confidence reduction", Box::new(VarLcr::new(p)?)),
    ];

    // Identical warmup for every policy: same slates, same rewards.
    let mut env_rng = stream_rng(3, user, 0, SeedStream::Environment);
    for t in 1..=20 {
        let slate = world.sample_slate(t, 12, &mut env_rng)?;
        for (_, policy) in &mut policies {
            policy.begin_round(t, &slate);
            let pos = policy.select_arm(&slate);
            let reward = world.arm_mean(user, slate.arm_id(pos));
            policy.observe_reward(slate.context(pos), reward);
        }
    }

    let slate = world.sample_slate(21, 12, &mut env_rng)?;
    println!("slate arms: {:?}\n", slate.arm_ids());
    println!("{:<26} chosen key-term   incident arms", "rule");
    for (name, policy) in &mut policies {
        policy.begin_round(21, &slate);
        let mut rng = stream_rng(3, user, 0, SeedStream::Policy);
        match policy.plan_query(&slate, Some(world.graph()), &mut rng) {
            Some(Query::KeyTerm(k)) => {
                println!(
                    "{name:<26} {k:<17} {}",
                    world.graph().keyterm_arms(k).len()
                );
            }
            other => println!("{name:<26} {other:?}"),
        }
    }
    println!("\nEach rule weighs slate context differently, so the same");
    println!("history produces different questions.");
    Ok(())
}
