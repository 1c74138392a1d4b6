use std::io::Write;
use std::process::ExitCode;

use smaplab::config::{parse_config, ConfigError};
use smaplab::run::run;

fn main() -> ExitCode {
    let cfg = match parse_config(std::env::args_os()) {
        Ok(c) => c,
        Err(ConfigError::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(report) => {
            // A closed pipe (`| head`) must not turn a finished run into a panic.
            let mut out = std::io::stdout().lock();
            for c in &report.checks {
                let status = if c.passed { "pass" } else { "FAIL" };
                let _ = writeln!(out, "{status} {:<22} {:.3e} (tol {:.1e})", c.name, c.measured, c.tolerance);
            }
            let _ = writeln!(out, "artifacts in {}", cfg.out_dir.display());
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error in {}: {e}", cfg.command.name());
            ExitCode::from(1)
        }
    }
}
