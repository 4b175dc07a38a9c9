//! `maintmine` — classify version-control commits into maintenance
//! activities (corrective, perfective, adaptive).
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

mod args;
mod cmd;
mod util;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn main() {
    reset_sigpipe();
    std::process::exit(run());
}

/// Rust spawns with SIGPIPE ignored, which turns a closed downstream pipe
/// (`maintmine ... | head`) into a write panic. Restore the conventional
/// die-on-SIGPIPE disposition so pipelines end quietly.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Import(a) => cmd::import(a),
        Command::Distill(a) => cmd::distill(a),
        Command::Vocab(a) => cmd::vocab(a),
        Command::Train(a) => cmd::train(a),
        Command::Classify(a) => cmd::classify(a),
        Command::Evaluate(a) => cmd::evaluate(a),
        Command::Cv(a) => cmd::cv(a),
        Command::RenderTree(a) => cmd::cmd_render_tree(a),
        Command::Freq(a) => cmd::freq(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
