use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(sqkd_core::cli::main_with_args(std::env::args_os()))
}
