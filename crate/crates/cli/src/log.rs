use std::path::Path;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use ctrace_core::codec::encode_field;
use ctrace_core::contactlog::{ContactLog, DEFAULT_RETENTION_DAYS};
use ctrace_core::Timestamp;

use crate::{fail, read_file, write_file, CmdResult, InputError};

fn load_with(path: &Path, retention_days: u32) -> Result<ContactLog, InputError> {
    ContactLog::parse(&read_file(path)?, retention_days).map_err(|e| fail(format!("{}: {e}", path.display())))
}

pub fn load_log(path: &Path) -> Result<ContactLog, InputError> {
    load_with(path, DEFAULT_RETENTION_DAYS)
}

pub fn show(path: &Path) -> CmdResult {
    print!("{}", load_log(path)?.to_text());
    Ok(ExitCode::SUCCESS)
}

pub fn prune(path: &Path, now: Option<Timestamp>, retention_days: u32) -> CmdResult {
    let mut log = load_with(path, retention_days)?;
    let now = match now {
        Some(t) => t,
        None => SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs() as Timestamp,
    };
    let before = log.len();
    log.prune(now);
    write_file(path, &log.to_text())?;
    eprintln!("pruned {} of {before} entries", before - log.len());
    Ok(ExitCode::SUCCESS)
}

pub fn stats(path: &Path) -> CmdResult {
    let s = load_log(path)?.exposure_statistics();
    println!("stat|entries|{}", s.entries);
    println!("stat|distinct_peers|{}", s.distinct_peers);
    for (label, n) in &s.locations {
        println!("stat|location|{}|{n}", encode_field(label));
    }
    Ok(ExitCode::SUCCESS)
}
