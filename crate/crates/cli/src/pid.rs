use std::path::Path;
use std::process::ExitCode;

use ctrace_core::identity::{generate_random_pid, generate_trusted_pid, Pid};

use crate::{write_file, CmdResult};

pub fn random(seed: Option<u64>) -> CmdResult {
    let pid = match seed {
        Some(seed) => generate_random_pid(seed),
        None => Pid::random(&mut rand::rng()),
    };
    println!("{pid}");
    Ok(ExitCode::SUCCESS)
}

pub fn trusted(name: &str, phrase: &str, out: Option<&Path>) -> CmdResult {
    let commitment = generate_trusted_pid(name, phrase)?;
    if let Some(path) = out {
        write_file(path, &format!("{}\n", commitment.to_line()))?;
    }
    println!("{}", commitment.pid);
    Ok(ExitCode::SUCCESS)
}
