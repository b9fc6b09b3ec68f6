use std::fs::File;
use std::io::{self, Write};
use std::process::ExitCode;

use anyhow::{Context, Result};

use mixedflow_cli::{csv_line, emit, mesh_stats, parse_config, run_study, Format, CSV_HEADER};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns whether every level succeeded.
fn real_main() -> Result<bool> {
    let config = parse_config(std::env::args_os().skip(1))?;
    if config.mesh_stats {
        for n in config.levels.0..=config.levels.1 {
            eprintln!("{}", mesh_stats(config.case.domain(), n)?);
        }
    }
    let mut out: Box<dyn Write> = match &config.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(io::stdout()),
    };
    // CSV rows are written as they complete so interrupted studies keep
    // their finished levels
    let streaming = config.format == Format::Csv;
    if streaming {
        writeln!(out, "{CSV_HEADER}")?;
        out.flush()?;
    }
    let mut io_err = None;
    let table = run_study(&config, |row| {
        log::info!("level {} done in {:.1}s (iters {:?})", row.n, row.seconds, row.iters);
        if streaming && io_err.is_none() {
            if let Err(e) = writeln!(out, "{}", csv_line(row)).and_then(|_| out.flush()) {
                io_err = Some(e);
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    if !streaming {
        out.write_all(emit(&table, config.format).as_bytes())?;
    }
    for r in table.rows.iter().filter(|r| r.failure.is_some()) {
        eprintln!("level {} failed: {}", r.n, r.failure.as_deref().unwrap_or(""));
    }
    Ok(table.rows.iter().all(|r| r.failure.is_none()))
}
