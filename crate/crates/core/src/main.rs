use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use fbenv::agent::{self, greedy_policy, AgentConfig, PolicyTable};
use fbenv::bench::{self, BenchMode};
use fbenv::server::{self, ServerConfig, TickMode};
use fbenv::{make_env, EnvConfig, Error};

#[derive(Parser)]
#[command(name = "fbenv", version, about = "Remote-framebuffer RL toolkit")]
struct Cli {
    /// Server host (bind address for `serve`).
    #[arg(long, global = true, default_value = "127.0.0.1")]
    host: String,
    /// Server port.
    #[arg(long, global = true, default_value_t = 5900)]
    port: u16,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Advance the game one tick per frame request instead of on a clock.
    #[arg(long, global = true)]
    lockstep: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the multitask-lite game server.
    Serve {
        /// Game ticks per second when not in lockstep
        #[arg(long, default_value_t = 30.0)]
        tick_rate: f64,
        /// Port for the state-hash side channel (0 = any free port).
        #[arg(long, default_value_t = 0)]
        hash_port: u16,
        /// Disable the state-hash side channel
        #[arg(long)]
        no_hash: bool,
        /// Start a new episode automatically after game over.
        #[arg(long)]
        auto_reset: bool,
    },
    /// Play episodes with a random or greedy policy and print their scores.
    Play {
        /// Environment config file (key = value lines)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyKind::Random)]
        policy: PolicyKind,
        /// Q-table for the greedy policy.
        #[arg(long)]
        qtable: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
    /// Train a Q-learning agent and save its table.
    Train {
        /// Environment config file (key = value lines)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value = "qtable.tsv")]
        out: PathBuf,
    },
    /// Measure capture throughput.
    Bench {
        /// Target frame rate; omit for unrestricted capture.
        #[arg(long)]
        fps: Option<f64>,
        /// Seconds to run.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
    /// Save consecutive frames as PGM images.
    Capture {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value = "frames")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Random,
    Greedy,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Kv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Argument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn endpoint(cli: &Cli) -> String {
    format!("{}:{}", cli.host, cli.port)
}

fn env_config(cli: &Cli, path: Option<&PathBuf>) -> fbenv::Result<EnvConfig> {
    let mut cfg = match path {
        Some(p) => EnvConfig::load(p)?,
        None => EnvConfig::with_endpoint(endpoint(cli)),
    };
    if path.is_none() || cli.port != 5900 || cli.host != "127.0.0.1" {
        cfg.endpoint = endpoint(cli);
    }
    cfg.lockstep |= cli.lockstep;
    Ok(cfg)
}

fn run(cli: Cli) -> fbenv::Result<()> {
    match &cli.command {
        Command::Serve {
            tick_rate,
            hash_port,
            no_hash,
            auto_reset,
        } => {
            let bind: IpAddr = cli
                .host
                .parse()
                .map_err(|_| Error::Argument(format!("bad bind address {:?}", cli.host)))?;
            let cfg = ServerConfig {
                bind,
                port: cli.port,
                hash_port: (!no_hash).then_some(*hash_port),
                tick: if cli.lockstep {
                    TickMode::Lockstep
                } else {
                    TickMode::Rate(*tick_rate)
                },
                auto_reset: *auto_reset,
                seed: cli.seed,
            };
            let handle = server::serve(cfg)?;
            println!("listening on {}", handle.addr());
            if let Some(h) = handle.hash_addr() {
                println!("state hash on {h}");
            }
            handle.wait();
            Ok(())
        }
        Command::Play {
            config,
            policy,
            qtable,
            episodes,
        } => {
            let cfg = env_config(&cli, config.as_ref())?;
            let mut env = make_env(cfg)?;
            let scores = match policy {
                PolicyKind::Random => agent::random_scores(&mut env, *episodes, cli.seed)?,
                PolicyKind::Greedy => {
                    let table: PolicyTable = match qtable {
                        Some(p) => greedy_policy(&agent::load_qtable(p)?.0),
                        None => {
                            return Err(Error::Argument(
                                "--policy greedy needs --qtable".into(),
                            ))
                        }
                    };
                    agent::greedy_scores(&mut env, &table, *episodes)?
                }
            };
            for (i, s) in scores.iter().enumerate() {
                println!("episode {i} score {s:.4}");
            }
            println!("mean {:.4}", agent::mean(&scores));
            Ok(())
        }
        Command::Train {
            config,
            episodes,
            out,
        } => {
            let cfg = env_config(&cli, config.as_ref())?;
            let mut env = make_env(cfg)?;
            let agent_cfg = AgentConfig::with_seed(cli.seed);
            let (table, report) = agent::train(&mut env, &agent_cfg, *episodes)?;
            let file = std::fs::File::create(out)?;
            table.write_to(std::io::BufWriter::new(file), agent_cfg.fingerprint())?;
            println!(
                "trained {} episodes, {} steps in {:.1} s; last-50 mean {:.4}; epsilon {:.3}; {} states -> {}",
                report.scores.len(),
                report.steps_total,
                report.wall_time.as_secs_f64(),
                report.tail_mean(50),
                report.final_epsilon,
                table.len(),
                out.display()
            );
            Ok(())
        }
        Command::Bench {
            fps,
            duration,
            format,
        } => {
            let mode = fps.map_or(BenchMode::Unrestricted, BenchMode::FixedRate);
            if !duration.is_finite() || *duration < 0.0 {
                return Err(Error::Argument(format!("bad duration {duration}")));
            }
            let report = bench::bench(mode, Duration::from_secs_f64(*duration), &endpoint(&cli))?;
            match format {
                OutputFormat::Table => print!("{}", report.to_table()),
                OutputFormat::Kv => print!("{}", report.to_kv()),
            }
            Ok(())
        }
        Command::Capture { count, out } => {
            let files = bench::capture(&endpoint(&cli), *count, out)?;
            println!("wrote {} frames to {}", files.len(), out.display());
            Ok(())
        }
    }
}
