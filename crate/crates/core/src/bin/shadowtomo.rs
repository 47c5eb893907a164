use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(shadowtomo::cli::run())
}
