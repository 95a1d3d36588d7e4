use std::io::Write;
use std::process::ExitCode;

use bergman_core::cli::{execute, output_path, Cli, Outcome};
use clap::Parser;

fn configure_threads() {
    let Ok(raw) = std::env::var("BERGMAN_THREADS") else { return };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring BERGMAN_THREADS={raw}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let Outcome { output, code, message } = execute(&cli);
    if !output.is_empty() {
        let written = match output_path(&cli) {
            Some(path) => std::fs::write(path, &output).map_err(|e| format!("cannot write {path}: {e}")),
            None => std::io::stdout().write_all(output.as_bytes()).map_err(|e| e.to_string()),
        };
        if let Err(e) = written {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if let Some(m) = message {
        eprintln!("error: {m}");
    }
    ExitCode::from(code as u8)
}
