//! "multitask-lite": balance a ball on a single tilting paddle.
//!
//! The ball obeys a linear unstable second-order system. Without input it
//! rolls off; tilting the paddle pushes it back. A tick that leaves the ball
//! beyond either edge ends the episode and the screen turns solid red.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::framebuffer::Framebuffer;
use crate::wire::PixelFormat;

/// Velocity added per tick per unit of paddle tilt.
pub const CONTROL_GAIN: f64 = 0.004;
/// Velocity added per tick per unit of displacement from centre.
pub const INSTABILITY_GAIN: f64 = 0.002;
/// Start positions are drawn uniformly from `[-MAX_START_OFFSET, MAX_START_OFFSET]`.
pub const MAX_START_OFFSET: f64 = 0.1;

pub const SCREEN_WIDTH: u16 = 160;
pub const SCREEN_HEIGHT: u16 = 160;
pub const PADDLE_ROW: usize = 140;
pub const PADDLE_THICKNESS: usize = 2;
/// Columns at each end of the paddle that move up or down to show the tilt.
pub const PADDLE_END_LEN: usize = 16;
pub const PADDLE_END_OFFSET: usize = 2;
pub const BALL_SIZE: usize = 8;
pub const BALL_TOP: usize = 120;
/// Ball centre column spans `0..=BALL_TRACK` as the position spans `-1..=1`.
pub const BALL_TRACK: f64 = 151.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Tilt {
    Left,
    #[default]
    Level,
    Right,
}

impl Tilt {
    pub fn sign(self) -> i8 {
        match self {
            Tilt::Left => -1,
            Tilt::Level => 0,
            Tilt::Right => 1,
        }
    }

    pub fn mirrored(self) -> Tilt {
        match self {
            Tilt::Left => Tilt::Right,
            Tilt::Level => Tilt::Level,
            Tilt::Right => Tilt::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameState {
    /// Ball position in half-screen units; the episode ends once |position| > 1.
    pub position: f64,
    pub velocity: f64,
    pub tilt: Tilt,
    pub ticks_survived: u64,
    pub terminal: bool,
    /// Seed the start position was drawn from.
    pub seed: u64,
}

impl GameState {
    /// Fresh episode: ball at rest, start position drawn from `seed`.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let position = rng.gen_range(-MAX_START_OFFSET..=MAX_START_OFFSET);
        GameState::at(position, 0.0, seed)
    }

    pub fn at(position: f64, velocity: f64, seed: u64) -> Self {
        GameState {
            position,
            velocity,
            tilt: Tilt::Level,
            ticks_survived: 0,
            terminal: position.abs() > 1.0,
            seed,
        }
    }
}

/// Advances one tick: `v += A*t + G*p; p += v`.
///
/// `ticks_survived` counts ticks that end with the ball still on the paddle,
/// so a terminal tick does not add to it.
pub fn step_game(state: &GameState, tilt: Tilt) -> Result<GameState> {
    if state.terminal {
        return Err(Error::InvalidState("cannot step a terminal game".into()));
    }
    let velocity =
        state.velocity + CONTROL_GAIN * f64::from(tilt.sign()) + INSTABILITY_GAIN * state.position;
    let position = state.position + velocity;
    let terminal = position.abs() > 1.0;
    Ok(GameState {
        position,
        velocity,
        tilt,
        ticks_survived: state.ticks_survived + u64::from(!terminal),
        terminal,
        seed: state.seed,
    })
}

/// How the server clock advances the game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TickMode {
    /// Real-time ticks at the given rate in Hz.
    Rate(f64),
    /// One tick per incremental update request.
    Lockstep,
}

impl Default for TickMode {
    fn default() -> Self {
        TickMode::Rate(30.0)
    }
}

/// Whole seconds survived at a real-time tick rate; raw ticks in lockstep.
pub fn score(state: &GameState, mode: TickMode) -> u64 {
    match mode {
        TickMode::Rate(hz) if hz > 0.0 => (state.ticks_survived as f64 / hz).floor() as u64,
        _ => state.ticks_survived,
    }
}

/// Centre column of the ball, rounded half-up.
pub fn ball_center_column(position: f64) -> i64 {
    ((position + 1.0) / 2.0 * BALL_TRACK + 0.5).floor() as i64
}

/// Draws the state into a 160x160 framebuffer in the canonical client format.
pub fn render(state: &GameState) -> Framebuffer {
    let fmt = PixelFormat::rgb888();
    let (w, h) = (usize::from(SCREEN_WIDTH), usize::from(SCREEN_HEIGHT));
    let mut pixels = vec![0u8; w * h * 4];
    let mut put = |x: usize, y: usize, rgb: u32| {
        let off = (y * w + x) * 4;
        fmt.write_pixel(rgb, &mut pixels[off..off + 4]);
    };

    if state.terminal {
        let red = fmt.pack_rgb(255, 0, 0);
        for y in 0..h {
            for x in 0..w {
                put(x, y, red);
            }
        }
    } else {
        let white = fmt.pack_rgb(255, 255, 255);
        // Paddle ends sit PADDLE_END_OFFSET rows lower on the side it tilts toward.
        let drop = PADDLE_END_OFFSET as i64 * i64::from(state.tilt.sign());
        for x in 0..w {
            let row_offset = if x < PADDLE_END_LEN {
                -drop
            } else if x >= w - PADDLE_END_LEN {
                drop
            } else {
                0
            };
            let top = (PADDLE_ROW as i64 + row_offset) as usize;
            for y in top..top + PADDLE_THICKNESS {
                put(x, y, white);
            }
        }
        let center = ball_center_column(state.position);
        let half = (BALL_SIZE / 2) as i64;
        for x in (center - half).max(0)..(center + half).min(w as i64) {
            for y in BALL_TOP..BALL_TOP + BALL_SIZE {
                put(x as usize, y, white);
            }
        }
    }
    Framebuffer::from_pixels(SCREEN_WIDTH, SCREEN_HEIGHT, fmt, pixels)
        .expect("render produces a full screen")
}
