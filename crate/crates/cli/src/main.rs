use std::process::ExitCode;

fn main() -> ExitCode {
    let code = vsn_cli::run_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
