//! Remote-framebuffer reinforcement learning toolkit.
//!
//! A minimal RFB 3.8 client captures frames from a VNC-style server, either
//! on a fixed-rate schedule or as fast as the server answers. On top of that
//! sits a Gym-style environment with pixel observations and keyboard actions,
//! a tabular Q-learning agent, and a small built-in game server
//! (`multitask-lite`) for deterministic testing.
//!
//! ```no_run
//! use fbenv::{client, PixelFormat};
//!
//! let mut session = client::connect("127.0.0.1:5900", PixelFormat::rgb888())?;
//! let frame = session.poll_frame()?;
//! println!("{}x{} mean {:.1}", frame.width(), frame.height(), frame.mean());
//! # Ok::<(), fbenv::Error>(())
//! ```

pub mod agent;
pub mod bench;
pub mod client;
pub mod env;
mod error;
pub mod framebuffer;
pub mod keysym;
pub mod pgm;
pub mod server;
pub mod wire;

pub use agent::{AgentConfig, EpsilonSchedule, QTable, StateKey, TrainReport};
pub use bench::{BenchMode, BenchReport};
pub use client::{CaptureStats, Session, StopCondition, StopSignal};
pub use env::{make_env, Env, EnvConfig, Observation, StepResult};
pub use error::{Error, Result};
pub use framebuffer::{Framebuffer, GrayFrame};
pub use server::{serve, ServerConfig, ServerHandle};
pub use wire::PixelFormat;
