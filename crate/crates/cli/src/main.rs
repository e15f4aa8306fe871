use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod dataset;
mod failure;
mod report;

use args::{Cli, Command};
use failure::{Failure, EXIT_USAGE};

fn run(command: &Command) -> Result<(), Failure> {
    let (report, out) = match command {
        Command::Fit(a) => (commands::cmd_fit(a)?, &a.out),
        Command::Test(a) => (commands::cmd_test(a)?, &a.out),
        Command::PowerTable(a) => (commands::cmd_power_table(a)?, &a.out),
        Command::Influence(a) => (commands::cmd_influence(a)?, &a.out),
        Command::Csif(a) => (commands::cmd_csif(a)?, &a.out),
    };
    report.emit(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("robust-wald: {f}");
            ExitCode::from(f.code)
        }
    }
}
