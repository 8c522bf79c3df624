use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(privrec_cli::execute(std::env::args_os()) as u8)
}
