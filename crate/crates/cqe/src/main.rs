use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match cqe::cli::Cli::try_parse() {
        Ok(cli) => cli,
        // Usage errors are validation failures (exit 1); help and version
        // requests print and succeed.
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    cqe::cli::init_logging(cli.verbose);
    match cqe::cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
