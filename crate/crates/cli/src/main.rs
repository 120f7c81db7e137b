use std::process::ExitCode;

use dualtherm_cli::{parse_args, parse_exit_code, run_command};

fn main() -> ExitCode {
    let cmd = match parse_args(std::env::args_os()) {
        Ok(cmd) => cmd,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(parse_exit_code(&e) as u8);
        }
    };
    match run_command(&cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
