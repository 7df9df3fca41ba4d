//! Notifications to past contacts: building them from a diagnosed user's
//! log, store-and-forward delivery keyed by PAD, and the receiver-side
//! verification pipeline.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use thiserror::Error;

use crate::certificates::{pids_covering_contact, verify_certificate, CertificateOfInfection, CertificateStatus, LabDirectory};
use crate::codec::{decode_field, encode_field, parse_num, split_record};
use crate::contactlog::{ContactLog, LogEntry};
use crate::error::ParseError;
use crate::identity::{Pad, Pid};
use crate::Timestamp;

const PAD_FILE_NAME: &AsciiSet = &NON_ALPHANUMERIC.remove(b'@').remove(b'.').remove(b'-').remove(b'_');

#[derive(Debug, Error)]
pub enum NotifyError {
    #[error("log entry uses PID {0} which the certificate does not declare")]
    UncoveredPid(Pid),
    #[error("malformed PAD {0:?}")]
    MalformedPad(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("mailbox storage: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notification {
    /// The diagnosed user's PID as announced during the contact.
    pub sender_pid: Pid,
    /// The recipient's own local time, as received during the contact.
    pub echoed_time: Timestamp,
    /// The recipient's own location label, as received during the contact.
    pub echoed_location: String,
    pub certificate: Option<CertificateOfInfection>,
}

impl Notification {
    /// `notif|v1|<sender_pid>|<echoed_time>|<echoed_loc%>`, then the two
    /// certificate lines when one is attached.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "notif|v1|{}|{}|{}\n",
            self.sender_pid,
            self.echoed_time,
            encode_field(&self.echoed_location)
        );
        if let Some(cert) = &self.certificate {
            out.push_str(&cert.to_text());
        }
        out
    }
}

/// Parses zero or more concatenated notifications.
pub fn parse_notifications(text: &str) -> Result<Vec<Notification>, ParseError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut out = Vec::new();
    while let Some(line) = lines.next() {
        let p = split_record(line, "notif", 5)?;
        if p[1] != "v1" {
            return Err(ParseError::new(format!("unsupported notification version {:?}", p[1])));
        }
        let certificate = match lines.peek() {
            Some(next) if next.starts_with("cert|") => {
                let payload = lines.next().expect("peeked");
                let sig = lines
                    .next()
                    .ok_or_else(|| ParseError::new("certificate payload without signature line"))?;
                Some(CertificateOfInfection::parse_lines(payload, sig)?)
            }
            _ => None,
        };
        out.push(Notification {
            sender_pid: Pid::new(p[2]).map_err(|e| ParseError::new(e.to_string()))?,
            echoed_time: parse_num(p[3], "echoed time")?,
            echoed_location: decode_field(p[4])?,
            certificate,
        });
    }
    Ok(out)
}

/// One notification per log entry sent under one of `own_pids`, addressed
/// to the peer's PAD and echoing the peer's own time and location.
pub fn build_notifications(
    log: &ContactLog,
    own_pids: &[Pid],
    certificate: Option<&CertificateOfInfection>,
) -> Result<Vec<(Pad, Notification)>, NotifyError> {
    log.entries()
        .iter()
        .filter(|e| own_pids.contains(&e.own_record.pid))
        .map(|e| {
            if let Some(cert) = certificate {
                if !cert.pids.contains(&e.own_record.pid) {
                    return Err(NotifyError::UncoveredPid(e.own_record.pid.clone()));
                }
            }
            Ok((
                e.peer_record.pad.clone(),
                Notification {
                    sender_pid: e.own_record.pid.clone(),
                    echoed_time: e.peer_record.local_time,
                    echoed_location: e.peer_record.local_location.clone(),
                    certificate: certificate.cloned(),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeploymentMode {
    CertificateRequired,
    CertificateOptional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VerificationStatus {
    Accepted,
    AcceptedUncertified,
    RejectedNoMatchingContact,
    RejectedUnknownLab,
    RejectedBadSignature,
    RejectedPidNotInCertificate,
}

impl VerificationStatus {
    pub fn is_accepted(self) -> bool {
        matches!(self, Self::Accepted | Self::AcceptedUncertified)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Accepted => "ACCEPTED",
            Self::AcceptedUncertified => "ACCEPTED-UNCERTIFIED",
            Self::RejectedNoMatchingContact => "REJECTED-NO-MATCHING-CONTACT",
            Self::RejectedUnknownLab => "REJECTED-UNKNOWN-LAB",
            Self::RejectedBadSignature => "REJECTED-BAD-SIGNATURE",
            Self::RejectedPidNotInCertificate => "REJECTED-PID-NOT-IN-CERTIFICATE",
        }
    }
}

impl fmt::Display for VerificationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationVerdict {
    pub status: VerificationStatus,
    pub matched_entry: Option<LogEntry>,
}

impl VerificationVerdict {
    fn rejected(status: VerificationStatus) -> Self {
        Self {
            status,
            matched_entry: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifierConfig {
    pub mode: DeploymentMode,
    pub time_tolerance_s: i64,
    pub post_test_margin_days: u32,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            mode: DeploymentMode::CertificateRequired,
            time_tolerance_s: crate::contactlog::DEFAULT_TIME_TOLERANCE_S,
            post_test_margin_days: 0,
        }
    }
}

/// Checks, in order: a matching contact in the own log, presence of a
/// certificate, its signature, and that it declares the sender's PID for
/// the time of the matched contact.
pub fn verify_notification(
    n: &Notification,
    log: &ContactLog,
    directory: &LabDirectory,
    config: &VerifierConfig,
) -> VerificationVerdict {
    use VerificationStatus::*;

    let Some(entry) = log.find_matching_contact(
        &n.sender_pid,
        n.echoed_time,
        &n.echoed_location,
        config.time_tolerance_s,
    ) else {
        return VerificationVerdict::rejected(RejectedNoMatchingContact);
    };

    let Some(cert) = &n.certificate else {
        return match config.mode {
            DeploymentMode::CertificateOptional => VerificationVerdict {
                status: AcceptedUncertified,
                matched_entry: Some(entry.clone()),
            },
            DeploymentMode::CertificateRequired => VerificationVerdict::rejected(RejectedBadSignature),
        };
    };

    match verify_certificate(cert, directory) {
        CertificateStatus::Verified => {}
        CertificateStatus::UnknownLab => return VerificationVerdict::rejected(RejectedUnknownLab),
        CertificateStatus::BadSignature => return VerificationVerdict::rejected(RejectedBadSignature),
    }

    let covered = pids_covering_contact(cert, entry.own_record.local_time, config.post_test_margin_days);
    if !covered.contains(&n.sender_pid) {
        return VerificationVerdict::rejected(RejectedPidNotInCertificate);
    }
    VerificationVerdict {
        status: Accepted,
        matched_entry: Some(entry.clone()),
    }
}

/// Store-and-forward delivery keyed by PAD.
pub trait MailboxStore {
    fn deliver(&self, pad: &str, n: &Notification) -> Result<(), NotifyError>;
    /// Returns and removes every pending message for `pad`.
    fn poll(&self, pad: &str) -> Result<Vec<Notification>, NotifyError>;
}

fn check_pad(pad: &str) -> Result<Pad, NotifyError> {
    Pad::new(pad).map_err(|_| NotifyError::MalformedPad(pad.to_owned()))
}

/// In-process mailboxes. Generic over the stored message so a simulator can
/// carry bookkeeping alongside each notification.
#[derive(Debug)]
pub struct InMemoryMailboxes<M = Notification> {
    boxes: Mutex<BTreeMap<Pad, VecDeque<M>>>,
}

impl<M> Default for InMemoryMailboxes<M> {
    fn default() -> Self {
        Self {
            boxes: Mutex::new(BTreeMap::new()),
        }
    }
}

impl<M> InMemoryMailboxes<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, pad: &Pad, message: M) {
        self.boxes
            .lock()
            .expect("mailbox lock poisoned")
            .entry(pad.clone())
            .or_default()
            .push_back(message);
    }

    pub fn drain(&self, pad: &Pad) -> Vec<M> {
        self.boxes
            .lock()
            .expect("mailbox lock poisoned")
            .remove(pad)
            .map(Vec::from)
            .unwrap_or_default()
    }

    pub fn pending(&self, pad: &Pad) -> usize {
        self.boxes
            .lock()
            .expect("mailbox lock poisoned")
            .get(pad)
            .map_or(0, VecDeque::len)
    }

    pub fn total_pending(&self) -> usize {
        self.boxes
            .lock()
            .expect("mailbox lock poisoned")
            .values()
            .map(VecDeque::len)
            .sum()
    }
}

impl MailboxStore for InMemoryMailboxes<Notification> {
    fn deliver(&self, pad: &str, n: &Notification) -> Result<(), NotifyError> {
        let pad = check_pad(pad)?;
        self.push(&pad, n.clone());
        Ok(())
    }

    fn poll(&self, pad: &str) -> Result<Vec<Notification>, NotifyError> {
        Ok(match Pad::new(pad) {
            Ok(pad) => self.drain(&pad),
            Err(_) => Vec::new(),
        })
    }
}

/// One file per PAD in a directory; the file name is the percent-encoded
/// PAD. Access is serialized by an in-process lock.
#[derive(Debug)]
pub struct FileMailboxes {
    root: PathBuf,
    lock: Mutex<()>,
}

impl FileMailboxes {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, NotifyError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, pad: &Pad) -> PathBuf {
        self.root
            .join(utf8_percent_encode(pad.as_str(), PAD_FILE_NAME).to_string())
    }
}

impl MailboxStore for FileMailboxes {
    fn deliver(&self, pad: &str, n: &Notification) -> Result<(), NotifyError> {
        let pad = check_pad(pad)?;
        let _guard = self.lock.lock().expect("mailbox lock poisoned");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path_for(&pad))?;
        file.write_all(n.to_text().as_bytes())?;
        Ok(())
    }

    fn poll(&self, pad: &str) -> Result<Vec<Notification>, NotifyError> {
        let Ok(pad) = Pad::new(pad) else {
            return Ok(Vec::new());
        };
        let _guard = self.lock.lock().expect("mailbox lock poisoned");
        let path = self.path_for(&pad);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let parsed = parse_notifications(&text)?;
        fs::remove_file(&path)?;
        Ok(parsed)
    }
}
