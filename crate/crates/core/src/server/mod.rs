//! In-repo RFB 3.8 server hosting the multitask-lite game.
//!
//! One client is served at a time. In real-time mode a ticker thread advances
//! the game at the configured rate and every update request is answered at
//! once with the changed regions (possibly none). In lockstep mode there is no
//! ticker: each incremental update request advances exactly one tick before
//! the reply, and non-incremental requests only refresh.
//!
//! A second TCP port answers line requests `HASH` with
//! `<fnv1a-64 hex> <generation>`: the hash of the framebuffer the client
//! should hold after applying every update sent so far, and the number of
//! updates sent. Tests use it to check client fidelity.

mod game;

pub use game::{
    ball_center_column, render, score, step_game, GameState, Tilt, TickMode, BALL_SIZE,
    BALL_TOP, BALL_TRACK, CONTROL_GAIN, INSTABILITY_GAIN, MAX_START_OFFSET, PADDLE_ROW,
    SCREEN_HEIGHT, SCREEN_WIDTH,
};

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::framebuffer::fnv1a64;
use crate::keysym;
use crate::wire::{
    decode_client_message, encode_server_message_into, handshake::parse_version, ClientMessage,
    PixelFormat, RectUpdate, Rectangle, ServerInit, ServerMessage, PROTOCOL_VERSION,
};

pub const DESKTOP_NAME: &str = "multitask-lite";
const INPUT_LOG_LIMIT: usize = 4096;
const POLL_INTERVAL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub bind: IpAddr,
    /// 0 picks an ephemeral port.
    pub port: u16,
    /// Port of the hash side channel; `None` disables it, 0 is ephemeral.
    pub hash_port: Option<u16>,
    pub tick: TickMode,
    /// Start a new episode automatically on the tick after a terminal one.
    pub auto_reset: bool,
    /// Seeds the stream of per-episode start seeds.
    pub seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 0,
            hash_port: Some(0),
            tick: TickMode::default(),
            auto_reset: false,
            seed: 0,
        }
    }
}

impl ServerConfig {
    pub fn lockstep(seed: u64) -> Self {
        ServerConfig {
            tick: TickMode::Lockstep,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TickMode::Rate(hz) = self.tick {
            if !(1.0..=10_000.0).contains(&hz) {
                return Err(Error::Config(format!(
                    "tick rate {hz} outside [1, 10000] Hz"
                )));
            }
        }
        Ok(())
    }
}

/// Which arrow keys are held, plus taps (press and release) since the last tick.
#[derive(Debug, Default, Clone, Copy)]
struct KeyState {
    left_held: bool,
    right_held: bool,
    last_pressed: Tilt,
    tapped: Tilt,
}

impl KeyState {
    fn key_event(&mut self, keysym: u32, down: bool) {
        let dir = match keysym {
            keysym::LEFT => Tilt::Left,
            keysym::RIGHT => Tilt::Right,
            _ => return,
        };
        match (dir, down) {
            (Tilt::Left, d) => self.left_held = d,
            (_, d) => self.right_held = d,
        }
        if down {
            self.last_pressed = dir;
            self.tapped = dir;
        }
    }

    /// Tilt for the next tick: the held key (latest press wins when both are
    /// held), else a key tapped since the previous tick, else level.
    fn take_tilt(&mut self) -> Tilt {
        let tilt = match (self.left_held, self.right_held) {
            (true, true) => self.last_pressed,
            (true, false) => Tilt::Left,
            (false, true) => Tilt::Right,
            (false, false) => self.tapped,
        };
        self.tapped = Tilt::Level;
        tilt
    }
}

/// What the connected client should currently hold.
struct ClientView {
    format: PixelFormat,
    pixels: Vec<u8>,
    generation: u64,
}

struct World {
    game: GameState,
    episode_seeds: ChaCha8Rng,
    episodes: u64,
    keys: KeyState,
    mode: TickMode,
    auto_reset: bool,
    view: Option<ClientView>,
    input_log: VecDeque<ClientMessage>,
}

impl World {
    fn new(cfg: &ServerConfig) -> Self {
        let mut episode_seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
        let game = GameState::from_seed(episode_seeds.next_u64());
        World {
            game,
            episode_seeds,
            episodes: 1,
            keys: KeyState::default(),
            mode: cfg.tick,
            auto_reset: cfg.auto_reset,
            view: None,
            input_log: VecDeque::new(),
        }
    }

    fn new_episode(&mut self) {
        self.game = GameState::from_seed(self.episode_seeds.next_u64());
        self.episodes += 1;
    }

    fn tick(&mut self) {
        if self.game.terminal {
            if self.auto_reset {
                self.new_episode();
            }
            return;
        }
        let tilt = self.keys.take_tilt();
        self.game = step_game(&self.game, tilt).expect("non-terminal state steps");
    }

    fn record(&mut self, msg: ClientMessage) {
        if self.input_log.len() == INPUT_LOG_LIMIT {
            self.input_log.pop_front();
        }
        self.input_log.push_back(msg);
    }

    fn key_event(&mut self, keysym: u32, down: bool) {
        if keysym == keysym::SPACE && down {
            self.new_episode();
        }
        self.keys.key_event(keysym, down);
    }

    /// Builds the FramebufferUpdate answering a request for `region` and
    /// records it in the client view.
    fn build_update(&mut self, incremental: bool, region: Rectangle) -> Result<Vec<RectUpdate>> {
        let view = self
            .view
            .as_mut()
            .ok_or_else(|| Error::InvalidState("no client attached".into()))?;
        let current = render(&self.game).convert(view.format)?;
        let region = clip(region);
        let rects = if incremental {
            diff_regions(current.pixels(), &view.pixels, &view.format, region)
        } else if region.area() == 0 {
            Vec::new()
        } else {
            vec![region]
        };
        let bpp = view.format.bytes_per_pixel();
        let stride = usize::from(SCREEN_WIDTH) * bpp;
        let mut updates = Vec::with_capacity(rects.len());
        for rect in rects {
            let pixels = current.region_bytes(&rect)?;
            let row_len = usize::from(rect.width) * bpp;
            for (i, row) in pixels.chunks_exact(row_len).enumerate() {
                let start = (usize::from(rect.y) + i) * stride + usize::from(rect.x) * bpp;
                view.pixels[start..start + row_len].copy_from_slice(row);
            }
            updates.push(RectUpdate { rect, pixels });
        }
        view.generation += 1;
        Ok(updates)
    }
}

fn clip(region: Rectangle) -> Rectangle {
    let x = region.x.min(SCREEN_WIDTH);
    let y = region.y.min(SCREEN_HEIGHT);
    let width = region.width.min(SCREEN_WIDTH - x);
    let height = region.height.min(SCREEN_HEIGHT - y);
    Rectangle::new(x, y, width, height)
}

/// Rectangles covering every pixel inside `region` where `current` differs
/// from `previous`: one per run of consecutive changed rows, spanning the
/// leftmost to rightmost changed column of that run.
fn diff_regions(
    current: &[u8],
    previous: &[u8],
    format: &PixelFormat,
    region: Rectangle,
) -> Vec<Rectangle> {
    let bpp = format.bytes_per_pixel();
    let stride = usize::from(SCREEN_WIDTH) * bpp;
    let (x0, x1) = (usize::from(region.x), usize::from(region.x + region.width));
    let changed_span = |y: usize| -> Option<(usize, usize)> {
        let span = y * stride + x0 * bpp..y * stride + x1 * bpp;
        let (a, b) = (&current[span.clone()], &previous[span]);
        if a == b {
            return None;
        }
        let differs = |i: &usize| a[i * bpp..(i + 1) * bpp] != b[i * bpp..(i + 1) * bpp];
        let first = (0..x1 - x0).find(differs)?;
        let last = (0..x1 - x0).rev().find(differs)?;
        Some((x0 + first, x0 + last + 1))
    };

    let mut rects = Vec::new();
    let mut run: Option<(usize, usize, usize)> = None; // (top, left, right)
    let bottom = usize::from(region.y + region.height);
    for y in usize::from(region.y)..=bottom {
        let span = if y < bottom { changed_span(y) } else { None };
        match (span, run.as_mut()) {
            (Some((l, r)), Some((_, left, right))) => {
                *left = (*left).min(l);
                *right = (*right).max(r);
            }
            (Some((l, r)), None) => run = Some((y, l, r)),
            (None, Some(&mut (top, left, right))) => {
                rects.push(Rectangle::new(
                    left as u16,
                    top as u16,
                    (right - left) as u16,
                    (y - top) as u16,
                ));
                run = None;
            }
            (None, None) => {}
        }
    }
    rects
}

struct Shared {
    world: Mutex<World>,
    shutdown: AtomicBool,
    client: Mutex<Option<TcpStream>>,
}

impl Shared {
    fn world(&self) -> MutexGuard<'_, World> {
        self.world.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// A running server. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    hash_addr: Option<SocketAddr>,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

/// Starts the server threads and returns once both ports are bound.
pub fn serve(cfg: ServerConfig) -> Result<ServerHandle> {
    cfg.validate()?;
    let listener = TcpListener::bind((cfg.bind, cfg.port))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let hash_listener = match cfg.hash_port {
        Some(port) => {
            let l = TcpListener::bind((cfg.bind, port))?;
            l.set_nonblocking(true)?;
            Some(l)
        }
        None => None,
    };
    let hash_addr = hash_listener.as_ref().map(|l| l.local_addr()).transpose()?;

    let shared = Arc::new(Shared {
        world: Mutex::new(World::new(&cfg)),
        shutdown: AtomicBool::new(false),
        client: Mutex::new(None),
    });

    let mut threads = Vec::new();
    let s = Arc::clone(&shared);
    threads.push(
        thread::Builder::new()
            .name("rfb-accept".into())
            .spawn(move || accept_loop(listener, s))?,
    );
    if let Some(l) = hash_listener {
        let s = Arc::clone(&shared);
        threads.push(
            thread::Builder::new()
                .name("rfb-hash".into())
                .spawn(move || hash_loop(l, s))?,
        );
    }
    if let TickMode::Rate(hz) = cfg.tick {
        let s = Arc::clone(&shared);
        threads.push(
            thread::Builder::new()
                .name("rfb-ticker".into())
                .spawn(move || ticker_loop(hz, s))?,
        );
    }
    Ok(ServerHandle {
        addr,
        hash_addr,
        shared,
        threads,
    })
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `host:port` string for [`crate::client::connect`].
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn hash_addr(&self) -> Option<SocketAddr> {
        self.hash_addr
    }

    pub fn game_state(&self) -> GameState {
        self.shared.world().game
    }

    /// Episodes started so far, counting the initial one.
    pub fn episodes(&self) -> u64 {
        self.shared.world().episodes
    }

    /// Hash and generation of the attached client's expected framebuffer.
    pub fn canonical_hash(&self) -> Option<(u64, u64)> {
        let world = self.shared.world();
        world
            .view
            .as_ref()
            .map(|v| (fnv1a64(&v.pixels), v.generation))
    }

    /// Key and pointer events received, oldest first (bounded).
    pub fn input_log(&self) -> Vec<ClientMessage> {
        self.shared.world().input_log.iter().cloned().collect()
    }

    /// Drops the current client connection, if any. Used for fault injection.
    pub fn drop_client(&self) {
        if let Some(stream) = self.shared.client.lock().unwrap_or_else(|e| e.into_inner()).take()
        {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }

    /// Blocks until the server threads exit (they only do on shutdown).
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(self) {}

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        self.drop_client();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn ticker_loop(hz: f64, shared: Arc<Shared>) {
    let period = Duration::from_secs_f64(1.0 / hz);
    let start = Instant::now();
    let mut k: u32 = 1;
    while !shared.shutdown.load(Ordering::Relaxed) {
        let deadline = start + period * k;
        let now = Instant::now();
        if deadline > now {
            thread::sleep((deadline - now).min(POLL_INTERVAL));
            continue;
        }
        shared.world().tick();
        k += 1;
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("client {peer} connected");
                if let Err(e) = handle_client(stream, &shared) {
                    debug!("client {peer} dropped: {e}");
                }
                shared.world().view = None;
                *shared.client.lock().unwrap_or_else(|e| e.into_inner()) = None;
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL_INTERVAL);
            }
        }
    }
}

fn server_handshake(stream: &mut TcpStream) -> Result<()> {
    stream.write_all(PROTOCOL_VERSION)?;
    let mut version = [0u8; 12];
    stream.read_exact(&mut version)?;
    if parse_version(&version)? != (3, 8) {
        return Err(Error::UnsupportedVersion(
            String::from_utf8_lossy(&version).trim_end().into(),
        ));
    }
    // one security type: None
    stream.write_all(&[1, 1])?;
    let mut choice = [0u8; 1];
    stream.read_exact(&mut choice)?;
    if choice[0] != 1 {
        stream.write_all(&1u32.to_be_bytes())?;
        let reason = b"only security type None is supported";
        stream.write_all(&(reason.len() as u32).to_be_bytes())?;
        stream.write_all(reason)?;
        return Err(Error::Protocol(format!("client chose security {}", choice[0])));
    }
    stream.write_all(&0u32.to_be_bytes())?;
    let mut client_init = [0u8; 1];
    stream.read_exact(&mut client_init)?;
    let init = ServerInit {
        width: SCREEN_WIDTH,
        height: SCREEN_HEIGHT,
        format: PixelFormat::rgb888(),
        name: DESKTOP_NAME.into(),
    };
    stream.write_all(&init.to_bytes())?;
    Ok(())
}

fn handle_client(mut stream: TcpStream, shared: &Shared) -> Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    *shared.client.lock().unwrap_or_else(|e| e.into_inner()) = Some(stream.try_clone()?);
    server_handshake(&mut stream)?;

    {
        let fmt = PixelFormat::rgb888();
        let len = usize::from(SCREEN_WIDTH) * usize::from(SCREEN_HEIGHT) * fmt.bytes_per_pixel();
        shared.world().view = Some(ClientView {
            format: fmt,
            pixels: vec![0; len],
            generation: 0,
        });
    }

    stream.set_read_timeout(Some(POLL_INTERVAL))?;
    let mut inbox: Vec<u8> = Vec::with_capacity(4096);
    let mut chunk = [0u8; 4096];
    let mut out = Vec::with_capacity(128 * 1024);
    loop {
        if shared.shutdown.load(Ordering::Relaxed) {
            return Ok(());
        }
        match stream.read(&mut chunk) {
            Ok(0) => return Ok(()),
            Ok(n) => inbox.extend_from_slice(&chunk[..n]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e.into()),
        }
        let mut consumed = 0;
        loop {
            match decode_client_message(&inbox[consumed..]) {
                Ok((msg, used)) => {
                    consumed += used;
                    handle_message(msg, shared, &mut out)?;
                }
                Err(e) if e.is_incomplete() => break,
                Err(e) => return Err(e),
            }
        }
        inbox.drain(..consumed);
        if !out.is_empty() {
            stream.write_all(&out)?;
            out.clear();
        }
    }
}

fn handle_message(msg: ClientMessage, shared: &Shared, out: &mut Vec<u8>) -> Result<()> {
    let mut world = shared.world();
    match msg {
        ClientMessage::SetPixelFormat(fmt) => {
            fmt.validate()?;
            if !fmt.true_color {
                return Err(Error::UnsupportedFormat("palette formats".into()));
            }
            let view = world.view.as_mut().expect("view exists while attached");
            view.format = fmt;
            view.pixels = vec![
                0;
                usize::from(SCREEN_WIDTH)
                    * usize::from(SCREEN_HEIGHT)
                    * fmt.bytes_per_pixel()
            ];
        }
        // Raw is always permitted, so the advertised list changes nothing.
        ClientMessage::SetEncodings(_) => {}
        ClientMessage::FramebufferUpdateRequest {
            incremental,
            region,
        } => {
            if incremental && world.mode == TickMode::Lockstep {
                world.tick();
            }
            let rects = world.build_update(incremental, region)?;
            encode_server_message_into(&ServerMessage::FramebufferUpdate(rects), out);
        }
        ClientMessage::KeyEvent { down, keysym } => {
            world.record(msg.clone());
            world.key_event(keysym, down);
        }
        ClientMessage::PointerEvent { .. } => world.record(msg),
    }
    Ok(())
}

fn hash_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                if let Err(e) = serve_hash_requests(stream, &shared) {
                    debug!("hash channel client dropped: {e}");
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                warn!("hash accept failed: {e}");
                thread::sleep(POLL_INTERVAL);
            }
        }
    }
}

fn serve_hash_requests(stream: TcpStream, shared: &Shared) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL_INTERVAL))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        if shared.shutdown.load(Ordering::Relaxed) {
            return Ok(());
        }
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e.into()),
        }
        if !line.ends_with('\n') {
            continue;
        }
        let reply = if line.trim() == "HASH" {
            let world = shared.world();
            match &world.view {
                Some(v) => format!("{:016x} {}\n", fnv1a64(&v.pixels), v.generation),
                None => format!("{:016x} 0\n", render(&world.game).content_hash()),
            }
        } else {
            "ERR unknown request\n".to_string()
        };
        line.clear();
        writer.write_all(reply.as_bytes())?;
    }
}

/// Asks a server's hash side channel for `(hash, generation)`.
pub fn query_state_hash(addr: SocketAddr) -> Result<(u64, u64)> {
    let mut stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    stream.write_all(b"HASH\n")?;
    let mut line = String::new();
    BufReader::new(stream).read_line(&mut line)?;
    let bad = || Error::Protocol(format!("bad hash reply {line:?}"));
    let mut parts = line.split_whitespace();
    let hash = parts
        .next()
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(bad)?;
    let generation = parts.next().and_then(|g| g.parse().ok()).ok_or_else(bad)?;
    Ok((hash, generation))
}
