use std::process::ExitCode;

fn main() -> ExitCode {
    coopnet::cli::run()
}
