//! The per-device log of significant contacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::codec::{decode_field, encode_field, parse_num};
use crate::encounter::{ContactSession, InformationRecord, SignificancePolicy, SignificanceVerdict};
use crate::error::ParseError;
use crate::identity::{Pad, Pid};
use crate::Timestamp;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const DEFAULT_RETENTION_DAYS: u32 = 21;
pub const MIN_RETENTION_DAYS: u32 = 14;
pub const MAX_RETENTION_DAYS: u32 = 28;
pub const DEFAULT_TIME_TOLERANCE_S: i64 = 300;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("entry recorded at {entry} precedes the last entry at {last}")]
    OutOfOrderEntry { entry: Timestamp, last: Timestamp },
    #[error("retention of {0} days outside the supported 14..=28")]
    InvalidRetention(u32),
    #[error("log entry must link two different PIDs")]
    SelfContact,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("log storage: {0}")]
    Io(#[from] io::Error),
}

/// A significant contact: what this device sent, what it received, and how
/// the contact qualified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub own_record: InformationRecord,
    pub peer_record: InformationRecord,
    /// Session close time.
    pub recorded_at: Timestamp,
    pub dwell_s: i64,
    pub policy_version: u32,
}

impl LogEntry {
    /// Builds the entry for a session the policy found significant.
    pub fn from_session(
        session: &ContactSession,
        verdict: &SignificanceVerdict,
        policy: &SignificancePolicy,
        recorded_at: Timestamp,
    ) -> Self {
        Self {
            own_record: session.own_record.clone(),
            peer_record: session.peer_record.clone(),
            recorded_at,
            dwell_s: verdict.dwell_s,
            policy_version: policy.version,
        }
    }

    /// `entry|<recorded_at>|<dwell_s>|<policy_version>|OWN|...|PEER|...`
    pub fn to_line(&self) -> String {
        format!(
            "entry|{}|{}|{}|OWN|{}|PEER|{}",
            self.recorded_at,
            self.dwell_s,
            self.policy_version,
            record_fields(&self.own_record),
            record_fields(&self.peer_record)
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, ParseError> {
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != 14 || parts[0] != "entry" || parts[4] != "OWN" || parts[9] != "PEER" {
            return Err(ParseError::new(format!("malformed log entry: {line:?}")));
        }
        Ok(Self {
            recorded_at: parse_num(parts[1], "recorded_at")?,
            dwell_s: parse_num(parts[2], "dwell_s")?,
            policy_version: parse_num(parts[3], "policy version")?,
            own_record: parse_record(&parts[5..9])?,
            peer_record: parse_record(&parts[10..14])?,
        })
    }
}

fn record_fields(r: &InformationRecord) -> String {
    format!("{}|{}|{}|{}", r.pid, r.pad, r.local_time, encode_field(&r.local_location))
}

fn parse_record(f: &[&str]) -> Result<InformationRecord, ParseError> {
    let pid = Pid::new(f[0]).map_err(|e| ParseError::new(e.to_string()))?;
    let pad = Pad::new(f[1]).map_err(|e| ParseError::new(e.to_string()))?;
    let time = parse_num(f[2], "local time")?;
    InformationRecord::new(pid, pad, time, decode_field(f[3])?).map_err(|e| ParseError::new(e.to_string()))
}

/// Byte transform applied to the serialized log before it is stored, e.g. a
/// user-keyed cipher.
pub trait ByteTransform {
    fn seal(&self, plain: &[u8]) -> Vec<u8>;
    fn open(&self, sealed: &[u8]) -> io::Result<Vec<u8>>;
}

/// Stores the log as plain text.
#[derive(Debug, Clone, Copy, Default)]
pub struct Plaintext;

impl ByteTransform for Plaintext {
    fn seal(&self, plain: &[u8]) -> Vec<u8> {
        plain.to_vec()
    }

    fn open(&self, sealed: &[u8]) -> io::Result<Vec<u8>> {
        Ok(sealed.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExposureSummary {
    pub entries: usize,
    pub distinct_peers: usize,
    pub locations: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactLog {
    entries: Vec<LogEntry>,
    retention_days: u32,
}

impl Default for ContactLog {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            retention_days: DEFAULT_RETENTION_DAYS,
        }
    }
}

impl ContactLog {
    pub fn new(retention_days: u32) -> Result<Self, LogError> {
        if !(MIN_RETENTION_DAYS..=MAX_RETENTION_DAYS).contains(&retention_days) {
            return Err(LogError::InvalidRetention(retention_days));
        }
        Ok(Self {
            entries: Vec::new(),
            retention_days,
        })
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn retention_days(&self) -> u32 {
        self.retention_days
    }

    pub fn append_entry(&mut self, entry: LogEntry) -> Result<(), LogError> {
        if entry.own_record.pid == entry.peer_record.pid {
            return Err(LogError::SelfContact);
        }
        if let Some(last) = self.entries.last() {
            if entry.recorded_at < last.recorded_at {
                return Err(LogError::OutOfOrderEntry {
                    entry: entry.recorded_at,
                    last: last.recorded_at,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Drops entries recorded before `now - retention`. An entry exactly at
    /// the cutoff is kept.
    pub fn prune(&mut self, now: Timestamp) {
        let cutoff = now - i64::from(self.retention_days) * SECONDS_PER_DAY;
        self.entries.retain(|e| e.recorded_at >= cutoff);
    }

    /// First entry with this peer PID, the echoed location, and own time
    /// within `time_tolerance_s` of the echoed time.
    pub fn find_matching_contact(
        &self,
        claimed_peer_pid: &Pid,
        echoed_time: Timestamp,
        echoed_location: &str,
        time_tolerance_s: i64,
    ) -> Option<&LogEntry> {
        self.entries.iter().find(|e| {
            &e.peer_record.pid == claimed_peer_pid
                && e.own_record.local_location == echoed_location
                && (e.own_record.local_time - echoed_time).abs() <= time_tolerance_s
        })
    }

    pub fn exposure_statistics(&self) -> ExposureSummary {
        let peers: BTreeSet<&Pid> = self.entries.iter().map(|e| &e.peer_record.pid).collect();
        let mut locations = BTreeMap::new();
        for e in &self.entries {
            *locations.entry(e.own_record.local_location.clone()).or_insert(0) += 1;
        }
        ExposureSummary {
            entries: self.entries.len(),
            distinct_peers: peers.len(),
            locations,
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| e.to_line() + "\n").collect()
    }

    pub fn parse(text: &str, retention_days: u32) -> Result<Self, LogError> {
        let mut log = Self::new(retention_days)?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            log.append_entry(LogEntry::parse_line(line)?)?;
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path, transform: &dyn ByteTransform) -> Result<(), LogError> {
        fs::write(path, transform.seal(self.to_text().as_bytes()))?;
        Ok(())
    }

    pub fn load(path: &Path, retention_days: u32, transform: &dyn ByteTransform) -> Result<Self, LogError> {
        let plain = transform.open(&fs::read(path)?)?;
        let text = String::from_utf8(plain).map_err(|_| ParseError::new("log is not UTF-8"))?;
        Self::parse(&text, retention_days)
    }
}
