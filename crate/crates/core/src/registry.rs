//! Repository of notified PIDs and the test-priority claim check, served
//! over a newline-terminated text protocol.
//!
//! ```text
//! QUERY <pid>                                            -> YES | NO
//! CLAIM <contact_pid> <claimant_pid> <name%> <phrase%>   -> CONFIRMED | UNKNOWN | OWNERSHIP-FAILED
//! INGEST\n<cert payload>\n<sig line>                     -> OK | REJECTED
//! ```
//! Unparsable requests get `ERROR <reason>`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::thread;

use chrono::NaiveDate;
use thiserror::Error;

use crate::certificates::{verify_certificate, CertificateOfInfection, CertificateStatus, LabDirectory};
use crate::codec::{decode_field, encode_field, split_record};
use crate::error::ParseError;
use crate::identity::{prove_pid_ownership, Pid};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("certificate rejected: {0:?}")]
    RejectedCertificate(CertificateStatus),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("registry i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotifiedRecord {
    pub lab_id: String,
    pub test_date: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NotifiedPidRepository {
    entries: BTreeMap<Pid, NotifiedRecord>,
}

impl NotifiedPidRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, pid: &Pid) -> Option<&NotifiedRecord> {
        self.entries.get(pid)
    }

    /// Keeps the earliest test date; ties go to the smaller lab id so the
    /// result does not depend on insertion order.
    fn record(&mut self, pid: Pid, rec: NotifiedRecord) -> bool {
        match self.entries.get(&pid) {
            Some(old) if (old.test_date, &old.lab_id) <= (rec.test_date, &rec.lab_id) => false,
            _ => {
                self.entries.insert(pid, rec);
                true
            }
        }
    }

    /// Records every PID of a verified certificate. Returns the persistence
    /// lines for PIDs whose record changed.
    pub fn ingest_certificate(
        &mut self,
        cert: &CertificateOfInfection,
        directory: &LabDirectory,
    ) -> Result<Vec<String>, RegistryError> {
        let status = verify_certificate(cert, directory);
        if status != CertificateStatus::Verified {
            return Err(RegistryError::RejectedCertificate(status));
        }
        let mut changed = Vec::new();
        for pid in &cert.pids {
            let rec = NotifiedRecord {
                lab_id: cert.lab_id.clone(),
                test_date: cert.test_date,
            };
            let line = persistence_line(pid, &rec);
            if self.record(pid.clone(), rec) {
                changed.push(line);
            }
        }
        Ok(changed)
    }

    pub fn is_notified_pid(&self, pid: &Pid) -> bool {
        self.entries.contains_key(pid)
    }

    pub fn check_test_priority_claim(
        &self,
        claimed_contact_pid: &Pid,
        claimant_personal_data: &str,
        claimant_phrase: &str,
        claimant_pid: &Pid,
    ) -> ClaimVerdict {
        if !self.is_notified_pid(claimed_contact_pid) {
            ClaimVerdict::ContactPidUnknown
        } else if !prove_pid_ownership(claimant_personal_data, claimant_phrase, claimant_pid) {
            ClaimVerdict::OwnershipFailed
        } else {
            ClaimVerdict::ContactConfirmed
        }
    }

    /// Replays `notified|<pid>|<lab_id>|<test_date>` lines.
    pub fn replay(text: &str) -> Result<Self, ParseError> {
        let mut repo = Self::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let p = split_record(line, "notified", 4)?;
            let pid = Pid::new(p[1]).map_err(|e| ParseError::new(e.to_string()))?;
            let test_date = p[3]
                .parse()
                .map_err(|_| ParseError::new(format!("invalid date {:?}", p[3])))?;
            repo.record(
                pid,
                NotifiedRecord {
                    lab_id: p[2].to_owned(),
                    test_date,
                },
            );
        }
        Ok(repo)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(pid, rec)| persistence_line(pid, rec) + "\n")
            .collect()
    }
}

fn persistence_line(pid: &Pid, rec: &NotifiedRecord) -> String {
    format!("notified|{pid}|{}|{}", rec.lab_id, rec.test_date.format("%Y-%m-%d"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimVerdict {
    ContactConfirmed,
    ContactPidUnknown,
    OwnershipFailed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Query(Pid),
    Claim {
        contact_pid: Pid,
        claimant_pid: Pid,
        personal_data: String,
        phrase: String,
    },
    /// The two certificate lines, kept raw so a malformed certificate is
    /// answered with `REJECTED` rather than a protocol error.
    Ingest { payload: String, signature: String },
}

impl Request {
    pub fn to_wire(&self) -> String {
        match self {
            Request::Query(pid) => format!("QUERY {pid}\n"),
            Request::Claim {
                contact_pid,
                claimant_pid,
                personal_data,
                phrase,
            } => format!(
                "CLAIM {contact_pid} {claimant_pid} {} {}\n",
                encode_field(personal_data),
                encode_field(phrase)
            ),
            Request::Ingest { payload, signature } => format!("INGEST\n{payload}\n{signature}\n"),
        }
    }

    pub fn ingest(cert: &CertificateOfInfection) -> Self {
        let text = cert.to_text();
        let mut lines = text.lines();
        Request::Ingest {
            payload: lines.next().unwrap_or_default().to_owned(),
            signature: lines.next().unwrap_or_default().to_owned(),
        }
    }

    /// Reads one request. `Ok(None)` at end of stream.
    pub fn read_from<R: BufRead>(reader: &mut R) -> Result<Option<Self>, RegistryError> {
        let Some(first) = read_line(reader)? else {
            return Ok(None);
        };
        let words: Vec<&str> = first.split(' ').collect();
        let pid = |s: &str| Pid::new(s).map_err(|e| ParseError::new(e.to_string()));
        let req = match words.as_slice() {
            ["QUERY", p] => Request::Query(pid(p)?),
            ["CLAIM", contact, claimant, data, phrase] => Request::Claim {
                contact_pid: pid(contact)?,
                claimant_pid: pid(claimant)?,
                personal_data: decode_field(data)?,
                phrase: decode_field(phrase)?,
            },
            ["INGEST"] => {
                let payload = read_line(reader)?.ok_or_else(|| ParseError::new("INGEST without certificate"))?;
                let signature = read_line(reader)?.ok_or_else(|| ParseError::new("INGEST without signature"))?;
                Request::Ingest { payload, signature }
            }
            _ => return Err(ParseError::new(format!("unknown request {first:?}")).into()),
        };
        Ok(Some(req))
    }
}

fn read_line<R: BufRead>(reader: &mut R) -> io::Result<Option<String>> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    let trimmed = line.trim_end_matches(['\n', '\r']).len();
    line.truncate(trimmed);
    Ok(Some(line))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Yes,
    No,
    Confirmed,
    Unknown,
    OwnershipFailed,
    Ok,
    Rejected,
    Error(String),
}

impl Response {
    /// Protocol-level success, used for the CLI exit code.
    pub fn is_positive(&self) -> bool {
        matches!(self, Response::Yes | Response::Confirmed | Response::Ok)
    }

    pub fn parse(line: &str) -> Result<Self, ParseError> {
        Ok(match line.trim_end_matches(['\n', '\r']) {
            "YES" => Response::Yes,
            "NO" => Response::No,
            "CONFIRMED" => Response::Confirmed,
            "UNKNOWN" => Response::Unknown,
            "OWNERSHIP-FAILED" => Response::OwnershipFailed,
            "OK" => Response::Ok,
            "REJECTED" => Response::Rejected,
            other => match other.strip_prefix("ERROR ") {
                Some(msg) => Response::Error(msg.to_owned()),
                None => return Err(ParseError::new(format!("unknown response {other:?}"))),
            },
        })
    }
}

impl From<ClaimVerdict> for Response {
    fn from(v: ClaimVerdict) -> Self {
        match v {
            ClaimVerdict::ContactConfirmed => Response::Confirmed,
            ClaimVerdict::ContactPidUnknown => Response::Unknown,
            ClaimVerdict::OwnershipFailed => Response::OwnershipFailed,
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Yes => f.write_str("YES"),
            Response::No => f.write_str("NO"),
            Response::Confirmed => f.write_str("CONFIRMED"),
            Response::Unknown => f.write_str("UNKNOWN"),
            Response::OwnershipFailed => f.write_str("OWNERSHIP-FAILED"),
            Response::Ok => f.write_str("OK"),
            Response::Rejected => f.write_str("REJECTED"),
            Response::Error(msg) => write!(f, "ERROR {}", msg.replace('\n', " ")),
        }
    }
}

/// Repository plus lab directory, safe to share between connections.
/// Mutations hold the write lock while they append to the store file.
pub struct RegistryService {
    repo: RwLock<NotifiedPidRepository>,
    directory: LabDirectory,
    store: Option<Mutex<File>>,
}

impl RegistryService {
    pub fn in_memory(directory: LabDirectory) -> Self {
        Self {
            repo: RwLock::new(NotifiedPidRepository::new()),
            directory,
            store: None,
        }
    }

    /// Replays `store` if it exists and appends later ingestions to it.
    pub fn with_store(directory: LabDirectory, store: &Path) -> Result<Self, RegistryError> {
        let repo = match fs::read_to_string(store) {
            Ok(text) => NotifiedPidRepository::replay(&text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => NotifiedPidRepository::new(),
            Err(e) => return Err(e.into()),
        };
        let file = OpenOptions::new().create(true).append(true).open(store)?;
        Ok(Self {
            repo: RwLock::new(repo),
            directory,
            store: Some(Mutex::new(file)),
        })
    }

    pub fn snapshot(&self) -> NotifiedPidRepository {
        self.repo.read().expect("registry lock poisoned").clone()
    }

    pub fn handle(&self, req: &Request) -> Response {
        match req {
            Request::Query(pid) => {
                if self.repo.read().expect("registry lock poisoned").is_notified_pid(pid) {
                    Response::Yes
                } else {
                    Response::No
                }
            }
            Request::Claim {
                contact_pid,
                claimant_pid,
                personal_data,
                phrase,
            } => self
                .repo
                .read()
                .expect("registry lock poisoned")
                .check_test_priority_claim(contact_pid, personal_data, phrase, claimant_pid)
                .into(),
            Request::Ingest { payload, signature } => {
                let Ok(cert) = CertificateOfInfection::parse_lines(payload, signature) else {
                    return Response::Rejected;
                };
                let mut repo = self.repo.write().expect("registry lock poisoned");
                let mut staged = repo.clone();
                let lines = match staged.ingest_certificate(&cert, &self.directory) {
                    Ok(lines) => lines,
                    Err(_) => return Response::Rejected,
                };
                if let Some(store) = &self.store {
                    let mut file = store.lock().expect("store lock poisoned");
                    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
                    if let Err(e) = file.write_all(text.as_bytes()).and_then(|_| file.flush()) {
                        return Response::Error(format!("store write failed: {e}"));
                    }
                }
                *repo = staged;
                Response::Ok
            }
        }
    }

    /// Serves one connection until the peer closes it.
    pub fn serve_connection(&self, stream: TcpStream) -> io::Result<()> {
        let mut writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        loop {
            let response = match Request::read_from(&mut reader) {
                Ok(Some(req)) => self.handle(&req),
                Ok(None) => return Ok(()),
                Err(RegistryError::Io(e)) => return Err(e),
                Err(e) => Response::Error(e.to_string()),
            };
            writeln!(writer, "{response}")?;
            writer.flush()?;
        }
    }
}

/// Accepts connections forever, one thread each.
pub fn serve(listener: TcpListener, service: Arc<RegistryService>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let service = Arc::clone(&service);
        thread::spawn(move || {
            let _ = service.serve_connection(stream);
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread. Returns the bound address.
pub fn spawn_server(addr: impl ToSocketAddrs, service: Arc<RegistryService>) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve(listener, service));
    Ok(local)
}

pub struct RegistryClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl RegistryClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        Ok(Self {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
        })
    }

    pub fn request(&mut self, req: &Request) -> Result<Response, RegistryError> {
        self.writer.write_all(req.to_wire().as_bytes())?;
        self.writer.flush()?;
        let line = read_line(&mut self.reader)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "registry closed the connection"))?;
        Ok(Response::parse(&line)?)
    }
}
