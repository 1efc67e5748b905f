use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::keysym;

/// What an action id does when stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    NoOp,
    Key(u32),
}

impl Action {
    pub fn keysym(self) -> Option<u32> {
        match self {
            Action::NoOp => None,
            Action::Key(k) => Some(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRegion {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRegion {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Game-over detector: a pixel whose colour matches `rgb` within `tolerance`
/// on every channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TerminalProbe {
    pub x: u16,
    pub y: u16,
    pub rgb: (u8, u8, u8),
    pub tolerance: u8,
}

impl TerminalProbe {
    pub fn matches(&self, rgb: (u8, u8, u8)) -> bool {
        let near = |a: u8, b: u8| a.abs_diff(b) <= self.tolerance;
        near(rgb.0, self.rgb.0) && near(rgb.1, self.rgb.1) && near(rgb.2, self.rgb.2)
    }
}

impl Default for TerminalProbe {
    fn default() -> Self {
        TerminalProbe {
            x: 5,
            y: 5,
            rgb: (255, 0, 0),
            tolerance: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// `host:port` of the RFB server.
    pub endpoint: String,
    /// Indexed by action id.
    pub actions: Vec<Action>,
    /// Source region of the observation; `None` is the full screen.
    pub crop: Option<CropRegion>,
    pub obs_width: usize,
    pub obs_height: usize,
    pub probe: TerminalProbe,
    /// Nominal game tick rate, used for the default reward and timed stepping.
    pub tick_rate: f64,
    /// Reward for each surviving step; defaults to `1 / tick_rate`.
    pub reward_per_step: Option<f64>,
    pub max_episode_steps: u64,
    pub lockstep: bool,
    pub reset_keysym: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            endpoint: "127.0.0.1:5900".into(),
            actions: vec![
                Action::NoOp,
                Action::Key(keysym::LEFT),
                Action::Key(keysym::RIGHT),
            ],
            crop: None,
            obs_width: 16,
            obs_height: 16,
            probe: TerminalProbe::default(),
            tick_rate: 30.0,
            reward_per_step: None,
            max_episode_steps: 3000,
            lockstep: false,
            reset_keysym: keysym::SPACE,
        }
    }
}

impl EnvConfig {
    pub fn with_endpoint(endpoint: impl Into<String>) -> Self {
        EnvConfig {
            endpoint: endpoint.into(),
            ..Default::default()
        }
    }

    pub fn reward_per_step(&self) -> f64 {
        self.reward_per_step.unwrap_or(1.0 / self.tick_rate)
    }

    /// Checks everything that does not depend on the screen size.
    pub fn validate(&self) -> Result<()> {
        if self.actions.is_empty() {
            return Err(Error::Config("action set is empty".into()));
        }
        if self.obs_width == 0 || self.obs_height == 0 {
            return Err(Error::Config("observation dimensions must be at least 1".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Config("max_episode_steps must be at least 1".into()));
        }
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            return Err(Error::Config(format!("tick_rate {} must be positive", self.tick_rate)));
        }
        if let Some(r) = self.reward_per_step {
            if !r.is_finite() {
                return Err(Error::Config("reward_per_step must be finite".into()));
            }
        }
        if let Some(c) = self.crop {
            if c.width < self.obs_width || c.height < self.obs_height {
                return Err(Error::Config(format!(
                    "crop {}x{} smaller than observation {}x{}",
                    c.width, c.height, self.obs_width, self.obs_height
                )));
            }
            if !c.contains(usize::from(self.probe.x), usize::from(self.probe.y)) {
                return Err(Error::Config(format!(
                    "probe ({}, {}) outside the crop region",
                    self.probe.x, self.probe.y
                )));
            }
        }
        Ok(())
    }

    /// Checks the parts that depend on the server's screen size.
    pub fn validate_for_screen(&self, width: u16, height: u16) -> Result<()> {
        self.validate()?;
        if self.probe.x >= width || self.probe.y >= height {
            return Err(Error::Config(format!(
                "probe ({}, {}) outside {width}x{height} screen",
                self.probe.x, self.probe.y
            )));
        }
        let crop = self.crop_for(width, height);
        if crop.x + crop.width > usize::from(width) || crop.y + crop.height > usize::from(height) {
            return Err(Error::Config(format!("crop {crop:?} outside {width}x{height} screen")));
        }
        if crop.width < self.obs_width || crop.height < self.obs_height {
            return Err(Error::Config("observation larger than the screen".into()));
        }
        Ok(())
    }

    pub fn crop_for(&self, width: u16, height: u16) -> CropRegion {
        self.crop.unwrap_or(CropRegion {
            x: 0,
            y: 0,
            width: usize::from(width),
            height: usize::from(height),
        })
    }

    /// Parses the flat `key = value` format; `#` starts a comment.
    ///
    /// Keys: `endpoint`, `actions` (comma list of `noop` or keysym names),
    /// `crop` (`x,y,w,h`), `obs_width`, `obs_height`, `probe` (`x,y`),
    /// `probe_rgb` (`r,g,b`), `probe_tolerance`, `tick_rate`,
    /// `reward_per_step`, `max_episode_steps`, `lockstep`, `reset_key`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = EnvConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = n + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected `key = value`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Config(format!("line {lineno}: bad {what} {value:?}"));
            match key {
                "endpoint" => cfg.endpoint = value.to_string(),
                "actions" => {
                    cfg.actions = value
                        .split(',')
                        .map(|a| match a.trim() {
                            "noop" | "none" => Ok(Action::NoOp),
                            k => keysym::parse(k).map(Action::Key).ok_or_else(|| bad("action")),
                        })
                        .collect::<Result<_>>()?;
                }
                "crop" => {
                    let v = numbers::<usize>(value).ok_or_else(|| bad("crop"))?;
                    let [x, y, width, height] = v[..] else {
                        return Err(bad("crop"));
                    };
                    cfg.crop = Some(CropRegion {
                        x,
                        y,
                        width,
                        height,
                    });
                }
                "obs_width" => cfg.obs_width = value.parse().map_err(|_| bad(key))?,
                "obs_height" => cfg.obs_height = value.parse().map_err(|_| bad(key))?,
                "probe" => {
                    let v = numbers::<u16>(value).ok_or_else(|| bad("probe"))?;
                    let [x, y] = v[..] else {
                        return Err(bad("probe"));
                    };
                    cfg.probe.x = x;
                    cfg.probe.y = y;
                }
                "probe_rgb" => {
                    let v = numbers::<u8>(value).ok_or_else(|| bad("colour"))?;
                    let [r, g, b] = v[..] else {
                        return Err(bad("colour"));
                    };
                    cfg.probe.rgb = (r, g, b);
                }
                "probe_tolerance" => cfg.probe.tolerance = value.parse().map_err(|_| bad(key))?,
                "tick_rate" => cfg.tick_rate = value.parse().map_err(|_| bad(key))?,
                "reward_per_step" => {
                    cfg.reward_per_step = Some(value.parse().map_err(|_| bad(key))?)
                }
                "max_episode_steps" => {
                    cfg.max_episode_steps = value.parse().map_err(|_| bad(key))?
                }
                "lockstep" => cfg.lockstep = value.parse().map_err(|_| bad(key))?,
                "reset_key" => cfg.reset_keysym = keysym::parse(value).ok_or_else(|| bad(key))?,
                other => {
                    return Err(Error::Config(format!("line {lineno}: unknown key {other:?}")))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let actions: Vec<String> = self
            .actions
            .iter()
            .map(|a| match a {
                Action::NoOp => "noop".to_string(),
                Action::Key(k) => format!("{k:#06x}"),
            })
            .collect();
        let _ = writeln!(s, "endpoint = {}", self.endpoint);
        let _ = writeln!(s, "actions = {}", actions.join(","));
        if let Some(c) = self.crop {
            let _ = writeln!(s, "crop = {},{},{},{}", c.x, c.y, c.width, c.height);
        }
        let _ = writeln!(s, "obs_width = {}", self.obs_width);
        let _ = writeln!(s, "obs_height = {}", self.obs_height);
        let _ = writeln!(s, "probe = {},{}", self.probe.x, self.probe.y);
        let (r, g, b) = self.probe.rgb;
        let _ = writeln!(s, "probe_rgb = {r},{g},{b}");
        let _ = writeln!(s, "probe_tolerance = {}", self.probe.tolerance);
        let _ = writeln!(s, "tick_rate = {}", self.tick_rate);
        if let Some(r) = self.reward_per_step {
            let _ = writeln!(s, "reward_per_step = {r}");
        }
        let _ = writeln!(s, "max_episode_steps = {}", self.max_episode_steps);
        let _ = writeln!(s, "lockstep = {}", self.lockstep);
        let _ = writeln!(s, "reset_key = {:#06x}", self.reset_keysym);
        s
    }
}

fn numbers<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    value.split(',').map(|v| v.trim().parse().ok()).collect()
}
