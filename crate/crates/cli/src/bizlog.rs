use std::fs::OpenOptions;
use std::io::Write;
use std::process::ExitCode;

use ctrace_core::bizlog::{visit_payload, ChainStatus, EvidenceVerdict, VisitorLog};
use ctrace_core::identity::Pid;
use ctrace_core::registry::{NotifiedPidRepository, RegistryClient, Request, Response};
use ctrace_core::Timestamp;

use crate::{fail, read_file, verdict, write_file, ChainFiles, CmdResult, InputError};

fn load(files: &ChainFiles, create: bool) -> Result<VisitorLog, InputError> {
    if create && !files.chain.exists() && !files.head.exists() {
        return Ok(VisitorLog::new(&files.business_id));
    }
    let chain = read_file(&files.chain)?;
    let head = read_file(&files.head)?;
    VisitorLog::parse(&files.business_id, &chain, &head).map_err(|e| fail(format!("{}: {e}", files.chain.display())))
}

pub fn append(files: &ChainFiles, pid: Pid, at: Timestamp) -> CmdResult {
    let mut log = load(files, true)?;
    let v = log.append_visit(pid, at)?;
    let lines = format!("{}\nhash|{}\n", visit_payload(v.seq, v.visited_at, &v.pid), v.entry_hash);
    let mut chain = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&files.chain)
        .map_err(|e| fail(format!("{}: {e}", files.chain.display())))?;
    chain.write_all(lines.as_bytes())?;
    write_file(&files.head, &log.head_text())?;
    print!("{lines}");
    Ok(ExitCode::SUCCESS)
}

pub fn verify(files: &ChainFiles) -> CmdResult {
    let status = load(files, false)?.verify_chain();
    println!("{status}");
    Ok(verdict(status == ChainStatus::Intact))
}

pub fn evidence(
    files: &ChainFiles,
    pid: &Pid,
    from: Timestamp,
    to: Timestamp,
    notified_file: Option<&std::path::Path>,
    registry: Option<&str>,
) -> CmdResult {
    let log = load(files, false)?;
    let certified = match (notified_file, registry) {
        (Some(path), _) => NotifiedPidRepository::replay(&read_file(path)?)
            .map_err(|e| fail(format!("{}: {e}", path.display())))?
            .is_notified_pid(pid),
        (None, Some(addr)) => {
            let mut client = RegistryClient::connect(addr).map_err(|e| fail(format!("{addr}: {e}")))?;
            client.request(&Request::Query(pid.clone()))? == Response::Yes
        }
        (None, None) => unreachable!("argument group enforces a source"),
    };
    let result = log.evidence_query(pid, from, to, |_| certified)?;
    println!("{}", result.label());
    Ok(verdict(result == EvidenceVerdict::VisitAndCertified))
}
