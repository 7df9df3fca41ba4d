use std::io::Write;
use std::net::TcpListener;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use ctrace_core::identity::Pid;
use ctrace_core::registry::{serve as serve_forever, RegistryClient, RegistryService, Request};

use crate::cert::load_directory;
use crate::{fail, read_file, verdict, CmdResult};

pub fn serve(bind: &str, port: u16, directory: &Path, store: Option<&Path>) -> CmdResult {
    let directory = load_directory(directory)?;
    let service = match store {
        Some(path) => RegistryService::with_store(directory, path)?,
        None => RegistryService::in_memory(directory),
    };
    let listener = TcpListener::bind((bind, port))?;
    println!("listening|{}", listener.local_addr()?);
    std::io::stdout().flush()?;
    serve_forever(listener, Arc::new(service))?;
    Ok(ExitCode::SUCCESS)
}

fn ask(addr: &str, req: &Request) -> CmdResult {
    let mut client = RegistryClient::connect(addr).map_err(|e| fail(format!("{addr}: {e}")))?;
    let response = client.request(req)?;
    println!("{response}");
    Ok(verdict(response.is_positive()))
}

pub fn query(addr: &str, pid: Pid) -> CmdResult {
    ask(addr, &Request::Query(pid))
}

pub fn claim(addr: &str, contact_pid: Pid, claimant_pid: Pid, personal_data: String, phrase: String) -> CmdResult {
    ask(
        addr,
        &Request::Claim {
            contact_pid,
            claimant_pid,
            personal_data,
            phrase,
        },
    )
}

/// Sends the file's two lines untouched; judging them is the server's job.
pub fn ingest(addr: &str, cert: &Path) -> CmdResult {
    let text = read_file(cert)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let [payload, signature] = lines.as_slice() else {
        return Err(fail(format!("{}: expected a payload line and a signature line", cert.display())));
    };
    ask(
        addr,
        &Request::Ingest {
            payload: payload.to_string(),
            signature: signature.to_string(),
        },
    )
}
