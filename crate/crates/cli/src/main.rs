mod args;
mod commands;
mod format;
mod setup;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Solve(a) => commands::solve_cmd(a),
        Command::Check(a) => commands::check(a),
        Command::Verify(a) => commands::verify(a),
        Command::List => Ok(commands::list()),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    std::process::exit(code);
}
