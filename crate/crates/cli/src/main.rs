use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(sppc_cli::run_args(std::env::args_os()))
}
