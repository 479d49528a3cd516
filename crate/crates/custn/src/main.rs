use std::process::ExitCode;

fn main() -> ExitCode {
    custn::cli::run()
}
