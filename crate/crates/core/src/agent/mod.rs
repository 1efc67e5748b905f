//! Tabular Q-learning over discretized pixel observations.

mod discretize;
mod qtable;
mod schedule;

pub use discretize::{Discretizer, StateTracker};
pub use qtable::{greedy_policy, select_action, PolicyTable, QTable, StateKey};
pub use schedule::EpsilonSchedule;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::Env;
use crate::error::{Error, Result};
use crate::framebuffer::fnv1a64;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub schedule: EpsilonSchedule,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            learning_rate: 0.1,
            discount: 0.99,
            schedule: EpsilonSchedule::default(),
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn with_seed(seed: u64) -> Self {
        AgentConfig {
            seed,
            ..Default::default()
        }
    }

    /// `learning_rate` in [0, 1] (0 freezes the table), `discount` in [0, 1),
    /// epsilons in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.learning_rate) {
            return Err(Error::Config(format!(
                "learning rate {} outside [0, 1]",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!(
                "discount {} outside [0, 1)",
                self.discount
            )));
        }
        if !unit.contains(&self.schedule.start) || !unit.contains(&self.schedule.end) {
            return Err(Error::Config(format!(
                "epsilon schedule {}..{} outside [0, 1]",
                self.schedule.start, self.schedule.end
            )));
        }
        Ok(())
    }

    /// Stable hash of the hyperparameters, recorded alongside saved tables.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "alpha={:?} gamma={:?} eps={:?}..{:?}/{} seed={}",
            self.learning_rate,
            self.discount,
            self.schedule.start,
            self.schedule.end,
            self.schedule.anneal_steps,
            self.seed
        );
        fnv1a64(text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub scores: Vec<f64>,
    pub steps_total: u64,
    pub final_epsilon: f64,
    pub wall_time: Duration,
}

impl TrainReport {
    /// Mean of the last `n` episode scores (all of them if fewer).
    pub fn tail_mean(&self, n: usize) -> f64 {
        mean(&self.scores[self.scores.len().saturating_sub(n)..])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Learner state: table, discretizer and exploration RNG.
pub struct Agent {
    pub config: AgentConfig,
    pub tracker: StateTracker,
    pub table: QTable,
    rng: ChaCha8Rng,
    steps: u64,
}

impl Agent {
    pub fn new(config: AgentConfig, num_actions: usize) -> Result<Agent> {
        config.validate()?;
        if num_actions == 0 {
            return Err(Error::Config("agent needs at least one action".into()));
        }
        Ok(Agent {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            tracker: StateTracker::new(Discretizer::default()),
            table: QTable::new(num_actions),
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn epsilon(&self) -> f64 {
        self.config.schedule.epsilon(self.steps)
    }

    pub fn act(&mut self, key: StateKey) -> usize {
        let eps = self.epsilon();
        select_action(&self.table, key, eps, &mut self.rng)
    }

    /// Plays one episode while learning; returns its score.
    pub fn train_episode(&mut self, env: &mut Env) -> Result<f64> {
        let obs = env.reset()?;
        let mut key = self.tracker.reset(&obs.frame);
        let mut score = 0.0;
        loop {
            let action = self.act(key);
            let step = env.step(action)?;
            let next_key = self.tracker.observe(&step.observation.frame);
            // truncation is not a real ending, so it keeps the bootstrap term
            self.table.update(
                key,
                action,
                step.reward,
                next_key,
                step.terminal,
                self.config.learning_rate,
                self.config.discount,
            )?;
            self.steps += 1;
            score += step.reward;
            if step.done() {
                return Ok(score);
            }
            key = next_key;
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.table
            .write_to(BufWriter::new(file), self.config.fingerprint())
    }
}

/// Trains a fresh agent for `episodes` episodes.
///
/// If the environment fails part way, the error carries the report for the
/// completed episodes.
pub fn train(env: &mut Env, config: &AgentConfig, episodes: usize) -> Result<(QTable, TrainReport)> {
    let mut agent = Agent::new(config.clone(), env.num_actions())?;
    let started = Instant::now();
    let mut scores = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        match agent.train_episode(env) {
            Ok(score) => {
                log::debug!("episode {} score {score:.4}", scores.len());
                scores.push(score);
            }
            Err(e) => {
                let partial = TrainReport {
                    scores,
                    steps_total: agent.steps,
                    final_epsilon: agent.epsilon(),
                    wall_time: started.elapsed(),
                };
                return Err(Error::TrainingAborted {
                    partial: Box::new(partial),
                    source: Box::new(e),
                });
            }
        }
    }
    let report = TrainReport {
        scores,
        steps_total: agent.steps,
        final_epsilon: agent.epsilon(),
        wall_time: started.elapsed(),
    };
    Ok((agent.table, report))
}

/// Scores of a uniformly random policy, reproducible from `seed`.
pub fn random_scores(env: &mut Env, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.num_actions();
    (0..episodes)
        .map(|_| Ok(env.run_episode(|_| Ok(rng.gen_range(0..n)))?.score))
        .collect()
}

/// Scores of acting greedily with respect to `policy`.
pub fn greedy_scores(env: &mut Env, policy: &PolicyTable, episodes: usize) -> Result<Vec<f64>> {
    let mut tracker = StateTracker::new(Discretizer::default());
    (0..episodes)
        .map(|_| {
            let episode = env.run_episode(|obs| {
                let key = if obs.step_index == 0 {
                    tracker.reset(&obs.frame)
                } else {
                    tracker.observe(&obs.frame)
                };
                Ok(policy.action(key))
            })?;
            Ok(episode.score)
        })
        .collect()
}

pub fn load_qtable(path: impl AsRef<Path>) -> Result<(QTable, u64)> {
    QTable::read_from(BufReader::new(File::open(path)?))
}
