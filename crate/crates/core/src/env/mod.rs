//! Gym-style environment over a remote framebuffer.
//!
//! Observations are cropped, downsampled grayscale frames. Actions map to
//! keysyms; the chosen direction key is held until a different action is
//! stepped. Game over is detected from pixels alone via a terminal probe.

mod config;

pub use config::{Action, CropRegion, EnvConfig, TerminalProbe};

use std::thread;
use std::time::{Duration, Instant};

use crate::client::{self, Session};
use crate::error::{Error, Result};
use crate::framebuffer::GrayFrame;
use crate::wire::PixelFormat;

/// How long a lockstep step may wait for the server's reply.
const STEP_TIMEOUT: Duration = Duration::from_secs(5);
/// How long reset waits for a non-terminal screen.
pub const RESET_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub frame: GrayFrame,
    pub step_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_state: Observation,
    /// The game ended on this step.
    pub terminal: bool,
    /// The episode was cut off at `max_episode_steps` without the game ending.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub score: f64,
    pub transitions: Vec<Transition>,
}

pub struct Env {
    session: Session,
    cfg: EnvConfig,
    crop: CropRegion,
    held: Option<u32>,
    step_index: u64,
    observation: Observation,
    episode_over: bool,
    next_tick: Instant,
}

/// Connects to the configured server and caches the first observation.
pub fn make_env(cfg: EnvConfig) -> Result<Env> {
    cfg.validate()?;
    let session = client::connect(&cfg.endpoint, PixelFormat::rgb888())?;
    Env::from_session(session, cfg)
}

impl Env {
    pub fn from_session(mut session: Session, cfg: EnvConfig) -> Result<Env> {
        let init = session.server_init();
        cfg.validate_for_screen(init.width, init.height)?;
        let crop = cfg.crop_for(init.width, init.height);
        let frame = extract(&mut session, &cfg, crop)?;
        let mut env = Env {
            session,
            crop,
            held: None,
            step_index: 0,
            observation: Observation {
                frame,
                step_index: 0,
            },
            episode_over: false,
            next_tick: Instant::now(),
            cfg,
        };
        env.episode_over = env.probe_terminal();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn num_actions(&self) -> usize {
        self.cfg.actions.len()
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// True when the probe pixel currently shows the terminal colour.
    pub fn probe_terminal(&self) -> bool {
        let p = &self.cfg.probe;
        self.session
            .framebuffer()
            .rgb_at(p.x, p.y)
            .is_some_and(|rgb| p.matches(rgb))
    }

    fn tick_period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.cfg.tick_rate)
    }

    fn refresh_observation(&mut self) -> Result<()> {
        let frame = extract(&mut self.session, &self.cfg, self.crop)?;
        self.observation = Observation {
            frame,
            step_index: self.step_index,
        };
        Ok(())
    }

    /// Switches the held key to `key`: releases the old one, presses the new one.
    fn latch(&mut self, key: Option<u32>) -> Result<()> {
        if self.held == key {
            return Ok(());
        }
        if let Some(old) = self.held.take() {
            self.session.send_key(old, false)?;
        }
        if let Some(new) = key {
            self.session.send_key(new, true)?;
            self.held = Some(new);
        }
        Ok(())
    }

    /// Starts a new episode and returns its first observation.
    pub fn reset(&mut self) -> Result<Observation> {
        self.latch(None)?;
        self.session.press_key(self.cfg.reset_keysym)?;
        let deadline = Instant::now() + RESET_TIMEOUT;
        loop {
            if self.cfg.lockstep {
                // a full refresh shows the new episode without advancing it
                self.session.request_update(false, STEP_TIMEOUT)?;
            } else {
                self.session.poll_frame()?;
            }
            if !self.probe_terminal() {
                break;
            }
            if Instant::now() >= deadline {
                return Err(Error::ResetTimeout);
            }
        }
        self.step_index = 0;
        self.episode_over = false;
        self.next_tick = Instant::now() + self.tick_period();
        self.refresh_observation()?;
        Ok(self.observation.clone())
    }

    /// Applies `action` for one frame.
    ///
    /// In lockstep this is exactly one game tick. Otherwise it waits for the
    /// next frame on the tick-rate schedule. The terminal step earns 0; the
    /// step that reaches `max_episode_steps` is flagged as truncated.
    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        let act = *self.cfg.actions.get(action).ok_or_else(|| {
            Error::Argument(format!(
                "action {action} outside 0..{}",
                self.cfg.actions.len()
            ))
        })?;
        if self.episode_over {
            return Err(Error::InvalidState(
                "episode is over; call reset before stepping".into(),
            ));
        }
        self.latch(act.keysym())?;
        if self.cfg.lockstep {
            self.session.request_update(true, STEP_TIMEOUT)?;
        } else {
            let now = Instant::now();
            if self.next_tick > now {
                thread::sleep(self.next_tick - now);
            }
            self.next_tick += self.tick_period();
            if self.next_tick < Instant::now() {
                self.next_tick = Instant::now() + self.tick_period();
            }
            self.session.poll_frame()?;
        }
        self.step_index += 1;
        let terminal = self.probe_terminal();
        let truncated = !terminal && self.step_index >= self.cfg.max_episode_steps;
        self.episode_over = terminal || truncated;
        self.refresh_observation()?;
        Ok(StepResult {
            observation: self.observation.clone(),
            reward: if terminal { 0.0 } else { self.cfg.reward_per_step() },
            terminal,
            truncated,
        })
    }

    /// Resets, then steps `policy` until the episode ends. The score is the
    /// sum of rewards.
    pub fn run_episode<P>(&mut self, mut policy: P) -> Result<Episode>
    where
        P: FnMut(&Observation) -> Result<usize>,
    {
        let mut state = self.reset()?;
        let mut transitions = Vec::new();
        let mut score = 0.0;
        loop {
            let action = policy(&state)?;
            let step = self.step(action)?;
            score += step.reward;
            let done = step.done();
            transitions.push(Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.observation.clone(),
                terminal: step.terminal,
                truncated: step.truncated,
            });
            if done {
                break;
            }
            state = step.observation;
        }
        Ok(Episode { score, transitions })
    }
}

fn extract(session: &mut Session, cfg: &EnvConfig, crop: CropRegion) -> Result<GrayFrame> {
    let full = session.current_frame()?;
    let cropped;
    let source = if crop.x == 0
        && crop.y == 0
        && crop.width == full.width()
        && crop.height == full.height()
    {
        full
    } else {
        cropped = full.crop(crop.x, crop.y, crop.width, crop.height)?;
        &cropped
    };
    source.downsample(cfg.obs_width, cfg.obs_height)
}
