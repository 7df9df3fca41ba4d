use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use chrono::NaiveDate;
use ctrace_core::certificates::{
    issue_certificate, CertificateOfInfection, CertificateStatus, LabDirectory, LabIdentity,
};
use ctrace_core::identity::Pid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{fail, read_file, verdict, write_file, CmdResult, InputError};

pub fn load_directory(path: &Path) -> Result<LabDirectory, InputError> {
    LabDirectory::parse(&read_file(path)?).map_err(|e| fail(format!("{}: {e}", path.display())))
}

pub fn load_certificate(path: &Path) -> Result<CertificateOfInfection, InputError> {
    CertificateOfInfection::parse_text(&read_file(path)?).map_err(|e| fail(format!("{}: {e}", path.display())))
}

pub fn keygen(lab_id: &str, seed: Option<u64>, key_out: &Path, directory: Option<&Path>) -> CmdResult {
    let lab = match seed {
        Some(seed) => LabIdentity::generate(lab_id, &mut ChaCha8Rng::seed_from_u64(seed))?,
        None => LabIdentity::generate(lab_id, &mut rand::rng())?,
    };
    write_file(key_out, &format!("{}\n", lab.to_key_line()))?;
    if let Some(dir) = directory {
        let existing = if dir.exists() { load_directory(dir)? } else { LabDirectory::new() };
        existing.with_lab(&lab)?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir)
            .map_err(|e| fail(format!("{}: {e}", dir.display())))?;
        writeln!(f, "{}", lab.directory_line())?;
    }
    println!("{}", lab.directory_line());
    Ok(ExitCode::SUCCESS)
}

pub fn issue(key: &Path, pids: &[Pid], test_date: NaiveDate, infectious_from: NaiveDate, out: Option<&Path>) -> CmdResult {
    let text = read_file(key)?;
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or_default();
    let lab = LabIdentity::parse_key_line(line).map_err(|e| fail(format!("{}: {e}", key.display())))?;
    let cert = issue_certificate(&lab, pids, test_date, infectious_from)?;
    match out {
        Some(path) => write_file(path, &cert.to_text())?,
        None => print!("{}", cert.to_text()),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(cert: &Path, directory: &Path) -> CmdResult {
    let text = read_file(cert)?;
    let dir = load_directory(directory)?;
    // Verify the payload bytes as stored, not a re-rendering of them.
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let [payload, sig] = lines.as_slice() else {
        return Err(fail(format!("{}: expected a payload line and a signature line", cert.display())));
    };
    let cert = CertificateOfInfection::parse_lines(payload, sig).map_err(|e| fail(format!("{}: {e}", cert.display())))?;
    let mut signed = cert.to_signed();
    signed.payload = payload.trim_end_matches('\r').as_bytes().to_vec();
    let status = signed.verify(&dir);
    println!("{}", status.label());
    Ok(verdict(status == CertificateStatus::Verified))
}
