use std::io;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use multitask_diffusion::cli::{execute, Cli, ExitStatus};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(ExitStatus::Usage.code() as u8),
            };
        }
    };
    let mut stdout = io::stdout().lock();
    let status = match execute(&cli, &mut stdout) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    };
    ExitCode::from(status.code() as u8)
}
