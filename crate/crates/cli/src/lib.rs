//! Command implementations behind the `dgmo` binary.

pub mod args;
pub mod batch;
pub mod config;
pub mod selftest;
pub mod separate;

use std::io::Write;

use anyhow::Result;

pub use args::{Cli, Command};
pub use batch::{cmd_eval, cmd_mix};
pub use config::{ProviderKind, RunConfig};
pub use selftest::run_selftest;
pub use separate::cmd_separate;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// 2 for configuration / usage problems anywhere in the chain, else 1.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    let usage = err
        .chain()
        .filter_map(|e| e.downcast_ref::<dgmo_core::Error>())
        .any(dgmo_core::Error::is_usage);
    if usage {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

/// Runs one parsed command and returns its exit code. Errors are returned
/// for the caller to print.
pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Mix(a) => {
            let report = cmd_mix(&a.manifest, &a.out, a.jobs, a.sample_rate)?;
            for dir in &report.written {
                println!("wrote {}", dir.display());
            }
            for (id, msg) in &report.failed {
                eprintln!("row {id}: {msg}");
            }
            Ok(if report.failed.is_empty() { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Separate(a) => {
            let cfg = a.resolve()?;
            let out = cmd_separate(&cfg)?;
            println!(
                "loss {:.6e} -> {:.6e}; outputs in {}",
                out.initial_loss,
                out.final_loss,
                out.dir.display()
            );
            Ok(EXIT_OK)
        }
        Command::Eval(a) => {
            let report = cmd_eval(&a.est, &a.truth, a.jobs, a.sample_rate)?;
            match &a.out {
                Some(path) => report.write_csv(std::fs::File::create(path)?)?,
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    report.write_csv(&mut lock)?;
                    lock.flush()?;
                }
            }
            for (id, msg) in &report.errors {
                eprintln!("{id}: {msg}");
            }
            Ok(if report.errors.is_empty() { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Selftest(a) => {
            let report = run_selftest(a.inject_failure)?;
            println!("{report}");
            Ok(if report.all_passed() { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}
