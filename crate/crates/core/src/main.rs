use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(shardsim::cli::run(std::env::args()) as u8)
}
