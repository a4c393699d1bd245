use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = coreclear_cli::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(coreclear_cli::EXIT_PARSE as u8);
    }
    let out = coreclear_cli::run_cli(std::env::args_os());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    let _ = std::io::stdout().flush();
    ExitCode::from(out.code as u8)
}
