use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// JSON-RPC 2.0 memory tool server over stdio.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Config file (falls back to MEMCTL_CONFIG, then defaults).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = memctl_server::load_config(args.config.as_deref())
        .map_err(Into::into)
        .and_then(memctl_server::run_stdio);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memctl-server: {e}");
            ExitCode::FAILURE
        }
    }
}
