use std::process::ExitCode;

fn main() -> ExitCode {
    lotdesign_service::cli::main()
}
