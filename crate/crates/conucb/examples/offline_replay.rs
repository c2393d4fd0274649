//! Offline evaluation on a synthesized click log: replays a fixed scoring
//! policy against uniformly logged events and checks the estimate against
//! the policy's directly simulated click rate.

use conucb::replay::{
    build_pools, direct_pool_ctr, replay, synthesize_uniform_log, ClickModel, FixedScorePolicy,
    LogSynthesis, ReplayConfig, UniformRandomPolicy,
};
use conucb::schedule::ConversationSchedule;
use conucb::sim::{derive_seed, generate_world, stream_rng, SeedStream, WorldParams};

fn main() -> conucb::Result<()> {
    let params = WorldParams {
        dim: 8,
        num_arms: 40,
        num_keyterms: 12,
        num_users: 4,
        max_keyterms_per_arm: 3,
        noise_std: 0.1,
    };
    let world = generate_world(&params, 9)?;
    let click = ClickModel {
        intercept: 0.5,
        slope: 0.4,
    };
    let log = synthesize_uniform_log(
        &world,
        &LogSynthesis {
            users: 4,
            events_per_user: 5000,
            click,
        },
        17,
    )?;
    println!(
        "log: {} events over {} users, raw click rate {:.4}",
        log.events().len(),
        4,
        log.click_rate()
    );

    let pool_size = 5;
    let mut rng = stream_rng(23, 0, 0, SeedStream::Environment);
    let pools = build_pools(&log, pool_size, &mut rng)?;
    let config = ReplayConfig::new(ConversationSchedule::None);

    // A fixed linear scorer: replay CTR should match direct simulation.
    let weights: Vec<f64> = world.user_preference(0).to_vec();
    let report = replay(&log, &pools, &config, |_| {
        Ok(Box::new(FixedScorePolicy::new(weights.clone())))
    })?;
    let mut direct = 0.0;
    for user in 0..4 {
        let mut rng = stream_rng(41, user, 0, SeedStream::Environment);
        let mut probe = FixedScorePolicy::new(weights.clone());
        direct +=
            direct_pool_ctr(&world, &click, user, pool_size, &mut probe, 20_000, &mut rng)? / 4.0;
    }
    println!("\nfixed scorer:");
    println!("  matched {} of {} events", report.total_matches, report.total_events);
    println!("  replay CTR  {:.4}", report.replay_ctr.unwrap());
    println!("  direct CTR  {direct:.4}");

    // The logging policy replayed against itself must normalize to 1.
    let report = replay(&log, &pools, &config, |user| {
        Ok(Box::new(UniformRandomPolicy::new(
            log.dim(),
            derive_seed(57, user, 0, SeedStream::Policy),
        )))
    })?;
    println!("\nuniform policy (the logger itself):");
    println!("  normalized CTR {:.4} (1.0 = unbiased)", report.normalized_ctr.unwrap());
    Ok(())
}
