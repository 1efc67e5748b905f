//! Capture throughput measurement and frame dumping.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::client::{self, StopCondition};
use crate::error::{Error, Result};
use crate::pgm;
use crate::wire::PixelFormat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMode {
    FixedRate(f64),
    Unrestricted,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMode::FixedRate(fps) => write!(f, "fixed-rate {fps} fps"),
            BenchMode::Unrestricted => f.write_str("unrestricted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub duration: Duration,
    pub frames: u64,
    pub achieved_fps: f64,
    pub frame_width: u16,
    pub frame_height: u16,
    pub bits_per_pixel: u8,
    pub bytes_processed: u64,
    pub cpu_time: Duration,
    /// Process CPU time over wall time.
    pub cpu_ratio: f64,
    pub latency_p50_ms: f64,
    pub latency_p99_ms: f64,
    /// Peak resident set size in KiB, if the platform reports it.
    pub peak_rss_kib: Option<u64>,
}

impl BenchReport {
    pub fn target_fps(&self) -> f64 {
        match self.mode {
            BenchMode::FixedRate(fps) => fps,
            BenchMode::Unrestricted => 0.0,
        }
    }

    /// One `key=value` line per metric; every value is numeric.
    pub fn to_kv(&self) -> String {
        let rows: [(&str, String); 13] = [
            ("target_fps", format!("{}", self.target_fps())),
            ("duration_s", format!("{:.3}", self.duration.as_secs_f64())),
            ("frames", self.frames.to_string()),
            ("achieved_fps", format!("{:.3}", self.achieved_fps)),
            ("frame_width", self.frame_width.to_string()),
            ("frame_height", self.frame_height.to_string()),
            ("bits_per_pixel", self.bits_per_pixel.to_string()),
            ("bytes_processed", self.bytes_processed.to_string()),
            ("cpu_time_s", format!("{:.3}", self.cpu_time.as_secs_f64())),
            ("cpu_ratio", format!("{:.4}", self.cpu_ratio)),
            ("latency_median_ms", format!("{:.3}", self.latency_p50_ms)),
            ("latency_tail_ms", format!("{:.3}", self.latency_p99_ms)),
            (
                "peak_rss_kib",
                self.peak_rss_kib.map_or("-1".into(), |k| k.to_string()),
            ),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let rss = self
            .peak_rss_kib
            .map_or("unknown".to_string(), |k| format!("{k} KiB"));
        let rows = [
            ("mode", self.mode.to_string()),
            ("duration", format!("{:.3} s", self.duration.as_secs_f64())),
            ("frames", self.frames.to_string()),
            ("achieved fps", format!("{:.1}", self.achieved_fps)),
            (
                "frame size",
                format!(
                    "{}x{} @ {} bpp",
                    self.frame_width, self.frame_height, self.bits_per_pixel
                ),
            ),
            ("bytes processed", self.bytes_processed.to_string()),
            ("cpu time", format!("{:.3} s", self.cpu_time.as_secs_f64())),
            ("cpu / wall", format!("{:.3}", self.cpu_ratio)),
            ("latency p50", format!("{:.3} ms", self.latency_p50_ms)),
            ("latency p99", format!("{:.3} ms", self.latency_p99_ms)),
            ("peak rss", rss),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

/// User plus system CPU time of this process, and peak RSS in KiB.
fn resource_usage() -> (Duration, Option<u64>) {
    // SAFETY: getrusage only writes into the zeroed struct we hand it.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) };
    if rc != 0 {
        return (Duration::ZERO, None);
    }
    let tv = |t: libc::timeval| {
        Duration::from_secs(t.tv_sec as u64) + Duration::from_micros(t.tv_usec as u64)
    };
    let cpu = tv(usage.ru_utime) + tv(usage.ru_stime);
    // ru_maxrss is KiB on Linux and bytes on macOS
    let rss = if cfg!(target_os = "macos") {
        usage.ru_maxrss as u64 / 1024
    } else {
        usage.ru_maxrss as u64
    };
    (cpu, (rss > 0).then_some(rss))
}

/// Captures from `endpoint` for `duration` and reports throughput and cost.
pub fn bench(mode: BenchMode, duration: Duration, endpoint: &str) -> Result<BenchReport> {
    if duration < Duration::from_secs(1) {
        return Err(Error::Argument(format!(
            "benchmark duration {duration:?} is shorter than 1 s"
        )));
    }
    if let BenchMode::FixedRate(fps) = mode {
        if !(1.0..=1000.0).contains(&fps) {
            return Err(Error::Argument(format!("fps {fps} outside [1, 1000]")));
        }
    }
    let mut session = client::connect(endpoint, PixelFormat::rgb888())?;
    let (cpu_before, _) = resource_usage();
    let stop = StopCondition::after(duration);
    let stats = match mode {
        BenchMode::FixedRate(fps) => {
            session.run_fixed_rate(fps, stop, |_, _| Ok::<_, Error>(()))?
        }
        BenchMode::Unrestricted => session.run_unrestricted(stop, |_, _| Ok::<_, Error>(()))?,
    };
    let (cpu_after, peak_rss_kib) = resource_usage();
    if let Some(e) = stats.error {
        return Err(e);
    }
    let fb = session.framebuffer();
    let bpp = fb.format().bits_per_pixel;
    let frame_bytes = u64::from(fb.width()) * u64::from(fb.height()) * u64::from(bpp) / 8;
    let cpu_time = cpu_after.saturating_sub(cpu_before);
    let wall = stats.wall_time.as_secs_f64();
    Ok(BenchReport {
        mode,
        duration: stats.wall_time,
        frames: stats.frames_delivered,
        achieved_fps: stats.achieved_fps,
        frame_width: fb.width(),
        frame_height: fb.height(),
        bits_per_pixel: bpp,
        bytes_processed: stats.frames_delivered * frame_bytes,
        cpu_time,
        cpu_ratio: if wall > 0.0 { cpu_time.as_secs_f64() / wall } else { 0.0 },
        latency_p50_ms: stats.latency_p50_ms,
        latency_p99_ms: stats.latency_p99_ms,
        peak_rss_kib,
    })
}

/// Saves `count` consecutive full-resolution grayscale frames as
/// `frame-000000.pgm`, `frame-000001.pgm`, ... in `out_dir`. The first file
/// is the frame received on connect. Existing files are overwritten.
pub fn capture(endpoint: &str, count: usize, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if count == 0 {
        return Err(Error::Argument("capture count must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut session = client::connect(endpoint, PixelFormat::rgb888())?;
    let mut written = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            session.poll_frame()?;
        }
        let path = out_dir.join(format!("frame-{i:06}.pgm"));
        pgm::save_pgm(session.current_frame()?, &path)?;
        written.push(path);
    }
    Ok(written)
}
