//! Trains a tabular Q-learning agent on the built-in game in lockstep mode,
//! then compares the greedy policy against random play.
//!
//! ```text
//! cargo run --release --example train_q_learning -- [episodes] [seed]
//! ```

use fbenv::agent::{self, greedy_policy, AgentConfig};
use fbenv::server::{self, ServerConfig};
use fbenv::{make_env, EnvConfig};

fn run(episodes: usize, seed: u64) -> fbenv::Result<()> {
    let server = server::serve(ServerConfig::lockstep(seed))?;
    let mut cfg = EnvConfig::with_endpoint(server.endpoint());
    cfg.lockstep = true;
    let mut env = make_env(cfg)?;

    let baseline = agent::random_scores(&mut env, 50, seed)?;
    println!("random policy: mean score {:.3}", agent::mean(&baseline));

    let (table, report) = agent::train(&mut env, &AgentConfig::with_seed(seed), episodes)?;
    println!(
        "trained {} episodes ({} steps) in {:.1} s",
        report.scores.len(),
        report.steps_total,
        report.wall_time.as_secs_f64()
    );
    for (i, chunk) in report.scores.chunks(50).enumerate() {
        println!("  episodes {:>4}..: mean {:.3}", i * 50, agent::mean(chunk));
    }

    let greedy = agent::greedy_scores(&mut env, &greedy_policy(&table), 5)?;
    println!("greedy policy: mean score {:.3}", agent::mean(&greedy));
    Ok(())
}

fn main() -> fbenv::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|a| a.parse().ok()).unwrap_or(500);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    run(episodes, seed)
}
