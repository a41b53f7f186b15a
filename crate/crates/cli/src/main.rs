use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;

use skfluct_cli::{run, write_records, Cli, CliError};

/// Exit status: 0 all inequality rows hold, 1 some row failed, 2 error.
fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("skfluct: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool, CliError> {
    let (subcommand, flags) = Cli::parse().command.split();
    let cfg = flags.into_config(subcommand)?;
    let result = run(&cfg)?;
    for notice in &result.notices {
        eprintln!("skipped: {notice}");
    }
    match &cfg.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_records(&mut w, &cfg, &result.rows)?;
            w.flush()?;
        }
        None => write_records(io::stdout().lock(), &cfg, &result.rows)?,
    }
    Ok(!result.any_unsatisfied())
}
