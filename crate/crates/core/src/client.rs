//! Live RFB client session: connection lifecycle, frame capture and input.
//!
//! Two capture methods are offered. [`Session::run_fixed_rate`] delivers
//! frames to a callback on an absolute-deadline timer; ticks that are already
//! late are skipped rather than queued. [`Session::run_unrestricted`] polls as
//! fast as the server answers.
//!
//! A session has one owner. Callbacks that want to inject input while a
//! capture loop runs use an [`InputSender`]; queued events are written, in
//! order, before the next frame request.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::framebuffer::{Framebuffer, GrayFrame};
use crate::wire::{
    decode_server_message, encode_client_message_into, perform_handshake, ClientMessage,
    PixelFormat, Rectangle, ServerInit, ServerMessage, ENCODING_RAW,
};

pub const DEFAULT_PORT: u16 = 5900;
pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
/// How long [`Session::poll_frame`] waits for an update before returning the
/// cached frame.
pub const POLL_DEADLINE: Duration = Duration::from_millis(100);

const READ_CHUNK: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaptureMode {
    Manual,
    FixedRate(f64),
    Unrestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Connecting,
    Ready,
    Closed,
}

/// Result of a capture loop. A failure that ended the loop early is kept in
/// `error`, alongside the statistics gathered up to that point.
#[derive(Debug, Default)]
pub struct CaptureStats {
    pub frames_delivered: u64,
    pub wall_time: Duration,
    pub achieved_fps: f64,
    pub latency_p50_ms: f64,
    pub latency_p99_ms: f64,
    pub error: Option<Error>,
}

impl CaptureStats {
    fn finish(frames: u64, wall_time: Duration, mut latencies: Vec<f64>, error: Option<Error>) -> Self {
        latencies.sort_by(f64::total_cmp);
        let secs = wall_time.as_secs_f64();
        CaptureStats {
            frames_delivered: frames,
            wall_time,
            achieved_fps: if secs > 0.0 { frames as f64 / secs } else { 0.0 },
            latency_p50_ms: percentile(&latencies, 0.50),
            latency_p99_ms: percentile(&latencies, 0.99),
            error,
        }
    }
}

/// Nearest-rank percentile of sorted samples; 0 for no samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Shared flag that ends a capture loop from another thread or a callback.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<AtomicBool>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fire(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_fired(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// When a capture loop ends: after a duration, on a signal, or whichever comes first.
#[derive(Debug, Clone, Default)]
pub struct StopCondition {
    pub max_duration: Option<Duration>,
    pub signal: Option<StopSignal>,
}

impl StopCondition {
    pub fn after(duration: Duration) -> Self {
        StopCondition {
            max_duration: Some(duration),
            signal: None,
        }
    }

    pub fn on_signal(signal: StopSignal) -> Self {
        StopCondition {
            max_duration: None,
            signal: Some(signal),
        }
    }

    pub fn or_signal(mut self, signal: StopSignal) -> Self {
        self.signal = Some(signal);
        self
    }

    fn fired(&self) -> bool {
        self.signal.as_ref().is_some_and(StopSignal::is_fired)
    }

    fn expired(&self, start: Instant, at: Instant) -> bool {
        self.max_duration
            .is_some_and(|d| at.saturating_duration_since(start) >= d)
    }
}

/// Queues input events for a session from inside a capture callback.
#[derive(Debug, Clone)]
pub struct InputSender {
    tx: Sender<ClientMessage>,
    width: u16,
    height: u16,
}

impl InputSender {
    fn queue(&self, msg: ClientMessage) -> Result<()> {
        self.tx
            .send(msg)
            .map_err(|_| Error::InvalidState("session has been dropped".into()))
    }

    pub fn send_key(&self, keysym: u32, down: bool) -> Result<()> {
        self.queue(ClientMessage::KeyEvent { down, keysym })
    }

    pub fn press_key(&self, keysym: u32) -> Result<()> {
        self.send_key(keysym, true)?;
        self.send_key(keysym, false)
    }

    pub fn send_pointer(&self, x: u16, y: u16, button_mask: u8) -> Result<()> {
        check_pointer(x, y, self.width, self.height)?;
        self.queue(ClientMessage::PointerEvent { button_mask, x, y })
    }
}

fn check_pointer(x: u16, y: u16, width: u16, height: u16) -> Result<()> {
    if x >= width || y >= height {
        return Err(Error::Argument(format!(
            "pointer ({x}, {y}) outside {width}x{height} screen"
        )));
    }
    Ok(())
}

pub struct Session {
    endpoint: String,
    server_init: ServerInit,
    stream: TcpStream,
    framebuffer: Framebuffer,
    gray: Option<GrayFrame>,
    mode: CaptureMode,
    state: SessionState,
    pending_requests: u32,
    inbox: Vec<u8>,
    read_buf: Box<[u8]>,
    out: Vec<u8>,
    queue_tx: Sender<ClientMessage>,
    queue_rx: Receiver<ClientMessage>,
}

/// Connects with the default 5 s timeout.
pub fn connect(endpoint: &str, format: PixelFormat) -> Result<Session> {
    connect_with_timeout(endpoint, format, CONNECT_TIMEOUT)
}

/// Connects, completes the handshake, negotiates `format` and raw encoding,
/// and applies one full framebuffer update before returning.
pub fn connect_with_timeout(
    endpoint: &str,
    format: PixelFormat,
    timeout: Duration,
) -> Result<Session> {
    format.validate()?;
    if !format.true_color {
        return Err(Error::Argument("the client requires a true-color format".into()));
    }
    let addr = resolve(endpoint)?;
    let timed_out = |e: std::io::Error| match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => Error::ConnectTimeout(endpoint.into()),
        _ => Error::Io(e),
    };
    let mut stream = TcpStream::connect_timeout(&addr, timeout).map_err(timed_out)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    let server_init = perform_handshake(&mut stream).map_err(|e| match e {
        Error::Io(io) => timed_out(io),
        other => other,
    })?;
    stream.set_write_timeout(None)?;

    let (queue_tx, queue_rx) = mpsc::channel();
    let mut session = Session {
        endpoint: endpoint.to_string(),
        framebuffer: Framebuffer::new(server_init.width, server_init.height, format),
        server_init,
        stream,
        gray: None,
        mode: CaptureMode::Manual,
        state: SessionState::Connecting,
        pending_requests: 0,
        inbox: Vec::with_capacity(READ_CHUNK),
        read_buf: vec![0u8; READ_CHUNK].into_boxed_slice(),
        out: Vec::with_capacity(64),
        queue_tx,
        queue_rx,
    };
    session.write_messages(&[
        ClientMessage::SetPixelFormat(format),
        ClientMessage::SetEncodings(vec![ENCODING_RAW]),
    ])?;
    session.request_update(false, timeout).map_err(|e| match e {
        Error::FrameTimeout(_) => Error::ConnectTimeout(endpoint.into()),
        other => other,
    })?;
    session.state = SessionState::Ready;
    Ok(session)
}

fn resolve(endpoint: &str) -> Result<SocketAddr> {
    let with_port = if endpoint.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok()) {
        endpoint.to_string()
    } else {
        format!("{endpoint}:{DEFAULT_PORT}")
    };
    with_port
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| Error::Argument(format!("cannot resolve {endpoint}")))
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("endpoint", &self.endpoint)
            .field("state", &self.state)
            .field("mode", &self.mode)
            .field("generation", &self.framebuffer.generation())
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn server_init(&self) -> &ServerInit {
        &self.server_init
    }

    pub fn framebuffer(&self) -> &Framebuffer {
        &self.framebuffer
    }

    /// Number of framebuffer updates applied; equals the framebuffer generation.
    pub fn frame_counter(&self) -> u64 {
        self.framebuffer.generation()
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn capture_mode(&self) -> CaptureMode {
        self.mode
    }

    pub fn input_sender(&self) -> InputSender {
        InputSender {
            tx: self.queue_tx.clone(),
            width: self.server_init.width,
            height: self.server_init.height,
        }
    }

    pub fn close(&mut self) {
        if self.state != SessionState::Closed {
            let _ = self.stream.shutdown(std::net::Shutdown::Both);
            self.state = SessionState::Closed;
        }
    }

    fn ensure_ready(&self) -> Result<()> {
        match self.state {
            SessionState::Ready => Ok(()),
            other => Err(Error::InvalidState(format!("session is {other:?}"))),
        }
    }

    /// Marks the session closed when `e` means the connection is unusable.
    fn fail(&mut self, e: Error) -> Error {
        if !matches!(e, Error::FrameTimeout(_) | Error::Argument(_)) {
            self.close();
        }
        e
    }

    fn full_screen(&self) -> Rectangle {
        Rectangle::new(0, 0, self.server_init.width, self.server_init.height)
    }

    /// Writes queued input, then `msgs`, in one write.
    fn write_messages(&mut self, msgs: &[ClientMessage]) -> Result<()> {
        self.out.clear();
        while let Ok(queued) = self.queue_rx.try_recv() {
            encode_client_message_into(&queued, &mut self.out)?;
        }
        for m in msgs {
            encode_client_message_into(m, &mut self.out)?;
        }
        if self.out.is_empty() {
            return Ok(());
        }
        if let Err(e) = self.stream.write_all(&self.out) {
            return Err(self.fail(Error::ConnectionLost(e.to_string())));
        }
        Ok(())
    }

    fn send_request(&mut self, incremental: bool) -> Result<()> {
        let region = self.full_screen();
        self.write_messages(&[ClientMessage::FramebufferUpdateRequest {
            incremental,
            region,
        }])?;
        self.pending_requests += 1;
        Ok(())
    }

    /// Decodes and applies every complete message already buffered.
    /// Returns the number of framebuffer updates applied.
    fn drain_inbox(&mut self) -> Result<u32> {
        let fmt = *self.framebuffer.format();
        let screen = (self.server_init.width, self.server_init.height);
        let mut consumed = 0;
        let mut updates = 0;
        let result = loop {
            match decode_server_message(&self.inbox[consumed..], &fmt, screen) {
                Ok((msg, used)) => {
                    consumed += used;
                    if let ServerMessage::FramebufferUpdate(rects) = msg {
                        if let Err(e) = self.framebuffer.apply_update(&rects) {
                            break Err(e);
                        }
                        if !rects.is_empty() {
                            self.gray = None;
                        }
                        self.pending_requests = self.pending_requests.saturating_sub(1);
                        updates += 1;
                    }
                }
                Err(e) if e.is_incomplete() => break Ok(updates),
                Err(e) => break Err(e),
            }
        };
        self.inbox.drain(..consumed);
        result.map_err(|e| self.fail(e))
    }

    /// Reads from the socket until at least one update is applied or the
    /// deadline passes. Returns whether an update arrived.
    fn await_update(&mut self, deadline: Instant) -> Result<bool> {
        if self.drain_inbox()? > 0 {
            return Ok(true);
        }
        loop {
            let now = Instant::now();
            if now >= deadline {
                return Ok(false);
            }
            self.stream
                .set_read_timeout(Some((deadline - now).max(Duration::from_micros(1))))?;
            match self.stream.read(&mut self.read_buf) {
                Ok(0) => {
                    return Err(self.fail(Error::ConnectionLost("server closed the connection".into())))
                }
                Ok(n) => {
                    self.inbox.extend_from_slice(&self.read_buf[..n]);
                    if self.drain_inbox()? > 0 {
                        return Ok(true);
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(self.fail(Error::ConnectionLost(e.to_string()))),
            }
        }
    }

    /// Sends one update request and waits until an update is applied.
    /// Unlike [`poll_frame`](Self::poll_frame), a missing reply is an error.
    pub fn request_update(&mut self, incremental: bool, timeout: Duration) -> Result<()> {
        if self.state == SessionState::Closed {
            return Err(Error::InvalidState("session is Closed".into()));
        }
        self.send_request(incremental)?;
        let deadline = Instant::now() + timeout;
        if self.await_update(deadline)? {
            Ok(())
        } else {
            Err(Error::FrameTimeout(timeout))
        }
    }

    /// Current frame as grayscale, recomputed only after pixel changes.
    pub fn current_frame(&mut self) -> Result<&GrayFrame> {
        if self.gray.is_none() {
            self.gray = Some(self.framebuffer.to_grayscale()?);
        }
        Ok(self.gray.as_ref().expect("just filled"))
    }

    fn poll_inner(&mut self) -> Result<()> {
        self.ensure_ready()?;
        if self.pending_requests == 0 {
            self.send_request(true)?;
        } else {
            // flush queued input even when no new request goes out
            self.write_messages(&[])?;
        }
        self.await_update(Instant::now() + POLL_DEADLINE)?;
        Ok(())
    }

    /// Requests an incremental update and returns the resulting frame. If the
    /// server sends nothing within [`POLL_DEADLINE`] the cached frame is returned.
    pub fn poll_frame(&mut self) -> Result<GrayFrame> {
        self.poll_inner()?;
        Ok(self.current_frame()?.clone())
    }

    /// Delivers frames to `callback` at `fps` until `stop` triggers.
    ///
    /// Tick `k` is due at `start + k/fps`. A tick more than half a period late
    /// is skipped, so callbacks never bunch up. The callback receives the
    /// frame and the tick index. It must return within one period; an error
    /// from it, or from the connection, ends the loop and is reported in the
    /// returned stats.
    pub fn run_fixed_rate<F, E>(
        &mut self,
        fps: f64,
        stop: StopCondition,
        mut callback: F,
    ) -> Result<CaptureStats>
    where
        F: FnMut(&GrayFrame, u64) -> std::result::Result<(), E>,
        E: std::fmt::Display,
    {
        if !(1.0..=1000.0).contains(&fps) {
            return Err(Error::Argument(format!("fps {fps} outside [1, 1000]")));
        }
        self.ensure_ready()?;
        self.mode = CaptureMode::FixedRate(fps);
        let period = Duration::from_secs_f64(1.0 / fps);
        let half = period / 2;
        let start = Instant::now();
        let mut tick: u64 = 0;
        let mut frames = 0;
        let mut latencies = Vec::new();
        let mut error = None;
        loop {
            if stop.fired() {
                break;
            }
            let due = start + period.mul_f64(tick as f64);
            if stop.expired(start, due) {
                break;
            }
            let now = Instant::now();
            if now < due {
                // sleep in slices so a stop signal is noticed promptly
                thread::sleep((due - now).min(Duration::from_millis(10)));
                continue;
            }
            if now - due > half {
                tick += 1;
                continue;
            }
            let t0 = Instant::now();
            if let Err(e) = self.poll_inner() {
                error = Some(e);
                break;
            }
            let frame = match self.current_frame() {
                Ok(f) => f,
                Err(e) => {
                    error = Some(e);
                    break;
                }
            };
            latencies.push(t0.elapsed().as_secs_f64() * 1e3);
            frames += 1;
            if let Err(e) = callback(frame, tick) {
                error = Some(Error::Callback(e.to_string()));
                break;
            }
            tick += 1;
        }
        self.mode = CaptureMode::Manual;
        Ok(CaptureStats::finish(frames, start.elapsed(), latencies, error))
    }

    /// Polls frames back to back, with no sleeping, until `stop` triggers.
    pub fn run_unrestricted<F, E>(
        &mut self,
        stop: StopCondition,
        mut callback: F,
    ) -> Result<CaptureStats>
    where
        F: FnMut(&GrayFrame, u64) -> std::result::Result<(), E>,
        E: std::fmt::Display,
    {
        self.ensure_ready()?;
        self.mode = CaptureMode::Unrestricted;
        let start = Instant::now();
        let mut frames = 0;
        let mut latencies = Vec::new();
        let mut error = None;
        loop {
            let t0 = Instant::now();
            if stop.fired() || stop.expired(start, t0) {
                break;
            }
            if let Err(e) = self.poll_inner() {
                error = Some(e);
                break;
            }
            let frame = match self.current_frame() {
                Ok(f) => f,
                Err(e) => {
                    error = Some(e);
                    break;
                }
            };
            latencies.push(t0.elapsed().as_secs_f64() * 1e3);
            if let Err(e) = callback(frame, frames) {
                frames += 1;
                error = Some(Error::Callback(e.to_string()));
                break;
            }
            frames += 1;
        }
        self.mode = CaptureMode::Manual;
        Ok(CaptureStats::finish(frames, start.elapsed(), latencies, error))
    }

    pub fn send_key(&mut self, keysym: u32, down: bool) -> Result<()> {
        self.ensure_ready()?;
        self.write_messages(&[ClientMessage::KeyEvent { down, keysym }])
    }

    /// Key down immediately followed by key up, with no frame request between.
    pub fn press_key(&mut self, keysym: u32) -> Result<()> {
        self.ensure_ready()?;
        self.write_messages(&[
            ClientMessage::KeyEvent { down: true, keysym },
            ClientMessage::KeyEvent {
                down: false,
                keysym,
            },
        ])
    }

    pub fn send_pointer(&mut self, x: u16, y: u16, button_mask: u8) -> Result<()> {
        self.ensure_ready()?;
        check_pointer(x, y, self.server_init.width, self.server_init.height)?;
        self.write_messages(&[ClientMessage::PointerEvent { button_mask, x, y }])
    }
}
