//! `cnmf` — constrained non-negative matrix factorization pipeline.

use clap::Parser;

use cnmf_cli::args::{Cli, Command};
use cnmf_cli::commands;

fn main() {
    // die quietly when stdout is a closed pipe (e.g. `cnmf ... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => commands::cmd_gen(args),
        Command::Fit(args) => commands::cmd_fit(args),
        Command::Transform(args) => commands::cmd_transform(args),
        Command::Eval(cmd) => commands::cmd_eval(cmd),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
