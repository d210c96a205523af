use std::process::ExitCode;

fn main() -> ExitCode {
    mobius_nli::cli::main_with_args(std::env::args_os())
}
