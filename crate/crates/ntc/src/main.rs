use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ntc::cli::main_with_args(std::env::args_os()))
}
