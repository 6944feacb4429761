use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memctl_bench::driver::seed_bank;
use memctl_bench::generate::DEFAULT_SEED;
use memctl_bench::{generate_benchmark, replay, CaseFile, Mode, ReplayOptions};
use memctl_core::{canonical, Engine};
use memctl_server::Server;

#[derive(Parser)]
#[command(version, about = "Benchmark generator and replay harness")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a seeded 200-case suite as JSON lines.
    Generate {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a case file in one mode and write the report.
    Replay {
        #[arg(long)]
        cases: PathBuf,
        /// offline-control, offline-full, online-shadow, live-control or live-full.
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Base server config; store, clock and shadow settings are overridden.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Keep the run's store here instead of a temporary directory.
        #[arg(long)]
        store_dir: Option<PathBuf>,
    },
    /// Serve the tools over stdio with every case's memories preloaded.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cases: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode {s:?}"))
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Cmd::Generate { seed, out } => {
            let file = generate_benchmark(seed);
            std::fs::write(&out, file.to_bytes()?)?;
            eprintln!("wrote {} cases to {}", file.cases.len(), out.display());
        }
        Cmd::Replay {
            cases,
            mode,
            config,
            report,
            store_dir,
        } => {
            let file = CaseFile::load(&cases)?;
            let base = memctl_server::load_config(config.as_deref())?;
            let opts = ReplayOptions {
                program: None,
                store_dir,
            };
            let result = replay(&file, mode, &base, &opts)?;
            let mut bytes = canonical::to_vec(&result)?;
            bytes.push(b'\n');
            std::fs::write(&report, bytes)?;
            let m = &result.metrics;
            eprintln!(
                "{:?}: accuracy {:.3} (non-injected {:.3}), hard-negative fp {:.3}, feedback write {:.3}, stats update {:.3}",
                mode,
                m.expected_decision_accuracy,
                m.non_injected_accuracy,
                m.hard_negative_fp_rate,
                m.feedback_write_rate,
                m.contextual_stats_update_rate
            );
        }
        Cmd::Serve { config, cases } => {
            let cfg = memctl_core::Config::load(&config)?;
            let file = CaseFile::load(&cases)?;
            let mut engine = Engine::open(cfg)?;
            seed_bank(&mut engine, &file)?;
            let mut server = Server::new(engine);
            server.serve(std::io::stdin().lock(), std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memctl-bench: {e}");
            ExitCode::FAILURE
        }
    }
}
