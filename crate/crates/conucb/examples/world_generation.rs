//! Generates a synthetic world and prints its structure: feature geometry,
//! key-term coverage, and the arm/key-term relation graph's degree profile.

use conucb::linalg::norm2;
use conucb::sim::{generate_world, WorldParams};

fn main() -> conucb::Result<()> {
    let params = WorldParams {
        dim: 10,
        num_arms: 200,
        num_keyterms: 30,
        num_users: 5,
        max_keyterms_per_arm: 4,
        noise_std: 0.1,
    };
    let world = generate_world(&params, 42)?;

    println!(
        "world: {} arms, {} key-terms, {} users, d={}",
        params.num_arms, params.num_keyterms, params.num_users, params.dim
    );

    // Arm features are unit vectors centered on their key-terms' pseudo
    // features.
    let norms: Vec<f64> = (0..params.num_arms)
        .map(|a| norm2(world.arm_feature(a)))
        .collect();
    println!(
        "arm feature norms: min {:.6}, max {:.6}",
        norms.iter().cloned().fold(f64::INFINITY, f64::min),
        norms.iter().cloned().fold(0.0, f64::max),
    );

    let graph = world.graph();
    let mut tag_counts = vec![0usize; params.max_keyterms_per_arm + 1];
    for a in 0..params.num_arms {
        tag_counts[graph.arm_keyterms(a).len()] += 1;
    }
    println!("arms by tag count:");
    for (k, count) in tag_counts.iter().enumerate().skip(1) {
        println!("  {k} key-terms: {count} arms");
    }

    let degrees: Vec<usize> = (0..params.num_keyterms)
        .map(|k| graph.keyterm_arms(k).len())
        .collect();
    println!(
        "key-term arm degree: min {}, max {} (every key-term is covered)",
        degrees.iter().min().unwrap(),
        degrees.iter().max().unwrap(),
    );

    // User preferences are unconstrained; their norms set the reward scale.
    for u in 0..params.num_users {
        let theta = world.user_preference(u);
        let best = (0..params.num_arms)
            .map(|a| world.arm_mean(u, a))
            .fold(f64::NEG_INFINITY, f64::max);
        println!(
            "user {u}: |theta| = {:.3}, best arm mean = {:.3}",
            norm2(theta),
            best
        );
    }
    Ok(())
}
