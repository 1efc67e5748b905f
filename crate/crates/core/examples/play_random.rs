//! Plays a few episodes with a seeded random policy through the environment API.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fbenv::server::ServerConfig;
use fbenv::{make_env, EnvConfig};

fn main() -> fbenv::Result<()> {
    let (endpoint, _server) = common::endpoint(ServerConfig::lockstep(11))?;
    let mut cfg = EnvConfig::with_endpoint(endpoint);
    cfg.lockstep = true;
    let mut env = make_env(cfg)?;
    println!(
        "{} actions, observations {}x{}",
        env.num_actions(),
        env.observation().frame.width(),
        env.observation().frame.height()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = env.num_actions();
    for i in 0..5 {
        let episode = env.run_episode(|_| Ok(rng.gen_range(0..n)))?;
        let last = episode.transitions.last().expect("episodes have a step");
        println!(
            "episode {i}: {} steps, score {:.3}, terminal {}",
            episode.transitions.len(),
            episode.score,
            last.terminal
        );
    }
    Ok(())
}
