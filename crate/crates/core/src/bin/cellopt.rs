use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cellopt::cli::main_with(std::env::args_os()))
}
