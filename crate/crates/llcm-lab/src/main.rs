use std::process::ExitCode;

fn main() -> ExitCode {
    llcm_lab::cli::run()
}
