//! Append-only, hash-chained visitor log kept by a business.
//!
//! ```text
//! entry_hash(k) = SHA-256(prev_hash || "visit|<seq>|<visited_at>|<pid>")
//! prev_hash(1)  = 0^32
//! ```
//! Publishing the head digest fixes the whole history: editing, inserting
//! or dropping any entry changes a recomputed hash.

use std::fmt;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{parse_num, split_record};
use crate::error::ParseError;
use crate::identity::Pid;
use crate::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, ParseError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseError::new(format!("invalid digest {s:?}")))?;
        Ok(Self(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BizlogError {
    #[error("visit at {at} precedes the last visit at {last}")]
    OutOfOrderVisit { at: Timestamp, last: Timestamp },
    #[error("window start {from} is after window end {to}")]
    InvalidWindow { from: Timestamp, to: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainedVisit {
    pub seq: u64,
    pub visited_at: Timestamp,
    pub pid: Pid,
    pub prev_hash: Digest,
    pub entry_hash: Digest,
}

pub fn visit_payload(seq: u64, visited_at: Timestamp, pid: &Pid) -> String {
    format!("visit|{seq}|{visited_at}|{pid}")
}

pub fn visit_hash(prev: &Digest, seq: u64, visited_at: Timestamp, pid: &Pid) -> Digest {
    let mut h = Sha256::new();
    h.update(prev.0);
    h.update(visit_payload(seq, visited_at, pid).as_bytes());
    Digest(h.finalize().into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Intact,
    /// Smallest position whose entry or link fails. A head that does not
    /// match the last entry reports one past the last position.
    TamperedAt(u64),
}

impl fmt::Display for ChainStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Intact => f.write_str("INTACT"),
            Self::TamperedAt(seq) => write!(f, "TAMPERED-AT {seq}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceVerdict {
    VisitAndCertified,
    NoVisitRecorded,
    NotCertifiedSick,
}

impl EvidenceVerdict {
    pub fn label(self) -> &'static str {
        match self {
            Self::VisitAndCertified => "VISIT-AND-CERTIFIED",
            Self::NoVisitRecorded => "NO-VISIT-RECORDED",
            Self::NotCertifiedSick => "NOT-CERTIFIED-SICK",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitorLog {
    pub business_id: String,
    pub chain: Vec<ChainedVisit>,
    pub head: Digest,
}

impl VisitorLog {
    pub fn new(business_id: impl Into<String>) -> Self {
        Self {
            business_id: business_id.into(),
            chain: Vec::new(),
            head: Digest::ZERO,
        }
    }

    /// Appends a consenting visitor's PID.
    pub fn append_visit(&mut self, pid: Pid, visited_at: Timestamp) -> Result<&ChainedVisit, BizlogError> {
        let (seq, prev_hash) = match self.chain.last() {
            Some(last) if visited_at < last.visited_at => {
                return Err(BizlogError::OutOfOrderVisit {
                    at: visited_at,
                    last: last.visited_at,
                })
            }
            Some(last) => (last.seq + 1, last.entry_hash),
            None => (1, Digest::ZERO),
        };
        let entry_hash = visit_hash(&prev_hash, seq, visited_at, &pid);
        self.chain.push(ChainedVisit {
            seq,
            visited_at,
            pid,
            prev_hash,
            entry_hash,
        });
        self.head = entry_hash;
        Ok(self.chain.last().expect("just pushed"))
    }

    pub fn verify_chain(&self) -> ChainStatus {
        let mut expected_prev = Digest::ZERO;
        for (i, v) in self.chain.iter().enumerate() {
            let position = i as u64 + 1;
            let ok = v.seq == position
                && v.prev_hash == expected_prev
                && v.entry_hash == visit_hash(&v.prev_hash, v.seq, v.visited_at, &v.pid);
            if !ok {
                return ChainStatus::TamperedAt(position);
            }
            expected_prev = v.entry_hash;
        }
        if self.head != expected_prev {
            return ChainStatus::TamperedAt(self.chain.len() as u64 + 1);
        }
        ChainStatus::Intact
    }

    pub fn evidence_query(
        &self,
        claimant_pid: &Pid,
        from: Timestamp,
        to: Timestamp,
        repo_query: impl Fn(&Pid) -> bool,
    ) -> Result<EvidenceVerdict, BizlogError> {
        if from > to {
            return Err(BizlogError::InvalidWindow { from, to });
        }
        let visited = self
            .chain
            .iter()
            .any(|v| &v.pid == claimant_pid && (from..=to).contains(&v.visited_at));
        Ok(if !visited {
            EvidenceVerdict::NoVisitRecorded
        } else if !repo_query(claimant_pid) {
            EvidenceVerdict::NotCertifiedSick
        } else {
            EvidenceVerdict::VisitAndCertified
        })
    }

    /// Chain file: a `visit|...` line then a `hash|<hex>` line per entry.
    pub fn chain_text(&self) -> String {
        self.chain
            .iter()
            .map(|v| format!("{}\nhash|{}\n", visit_payload(v.seq, v.visited_at, &v.pid), v.entry_hash))
            .collect()
    }

    pub fn head_text(&self) -> String {
        format!("head|{}\n", self.head)
    }

    /// Loads stored values as-is; links are rebuilt from the stored hashes so
    /// that verification sees exactly what is on disk.
    pub fn parse(business_id: &str, chain: &str, head: &str) -> Result<Self, ParseError> {
        let lines: Vec<&str> = chain.lines().filter(|l| !l.trim().is_empty()).collect();
        if !lines.len().is_multiple_of(2) {
            return Err(ParseError::new("chain file must alternate visit and hash lines"));
        }
        let mut log = Self::new(business_id);
        let mut prev = Digest::ZERO;
        for pair in lines.chunks(2) {
            let v = split_record(pair[0], "visit", 4)?;
            let h = split_record(pair[1], "hash", 2)?;
            let entry_hash = Digest::from_hex(h[1])?;
            log.chain.push(ChainedVisit {
                seq: parse_num(v[1], "visit seq")?,
                visited_at: parse_num(v[2], "visit time")?,
                pid: Pid::new(v[3]).map_err(|e| ParseError::new(e.to_string()))?,
                prev_hash: prev,
                entry_hash,
            });
            prev = entry_hash;
        }
        let head_lines: Vec<&str> = head.lines().filter(|l| !l.trim().is_empty()).collect();
        log.head = match head_lines.as_slice() {
            [] => Digest::ZERO,
            [line] => Digest::from_hex(split_record(line, "head", 2)?[1])?,
            _ => return Err(ParseError::new("head file must hold one line")),
        };
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid(s: &str) -> Pid {
        Pid::new(s).unwrap()
    }

    fn chain(n: usize) -> VisitorLog {
        let mut log = VisitorLog::new("cafe");
        for i in 0..n {
            log.append_visit(pid(&format!("p{i}")), i as i64 * 60).unwrap();
        }
        log
    }

    #[test]
    fn append_examples() {
        let mut log = VisitorLog::new("cafe");
        let first = log.append_visit(pid("a"), 10).unwrap().clone();
        assert_eq!((first.seq, first.prev_hash), (1, Digest::ZERO));
        let second = log.append_visit(pid("b"), 20).unwrap().clone();
        assert_eq!(second.prev_hash, first.entry_hash);
        assert_eq!(log.head, second.entry_hash);
        assert_eq!(
            log.append_visit(pid("c"), 5).unwrap_err(),
            BizlogError::OutOfOrderVisit { at: 5, last: 20 }
        );
    }

    #[test]
    fn hash_matches_reference_construction() {
        // python3: hashlib.sha256(bytes(32) + b'visit|1|10|a').hexdigest()
        assert_eq!(
            visit_hash(&Digest::ZERO, 1, 10, &pid("a")).to_hex(),
            "402c77d0d7e624a394a5b975996d29887f858e37d9c3d6c6721e46ec76f7bfb4"
        );
    }

    #[test]
    fn tamper_examples() {
        let log = chain(100);
        assert_eq!(log.verify_chain(), ChainStatus::Intact);

        let mut edited = log.clone();
        edited.chain[36].pid = pid("mallory");
        assert_eq!(edited.verify_chain(), ChainStatus::TamperedAt(37));

        let mut truncated = log.clone();
        truncated.chain.pop();
        assert_eq!(truncated.verify_chain(), ChainStatus::TamperedAt(100));
    }

    #[test]
    fn evidence_examples() {
        let mut log = VisitorLog::new("cafe");
        log.append_visit(pid("sick"), 100).unwrap();
        log.append_visit(pid("healthy"), 200).unwrap();
        let repo = |p: &Pid| p.as_str() == "sick";
        assert_eq!(log.evidence_query(&pid("sick"), 0, 150, repo).unwrap(), EvidenceVerdict::VisitAndCertified);
        assert_eq!(log.evidence_query(&pid("sick"), 150, 300, repo).unwrap(), EvidenceVerdict::NoVisitRecorded);
        assert_eq!(log.evidence_query(&pid("stranger"), 0, 300, repo).unwrap(), EvidenceVerdict::NoVisitRecorded);
        assert_eq!(log.evidence_query(&pid("healthy"), 0, 300, repo).unwrap(), EvidenceVerdict::NotCertifiedSick);
        assert_eq!(
            log.evidence_query(&pid("sick"), 5, 4, repo),
            Err(BizlogError::InvalidWindow { from: 5, to: 4 })
        );
    }

    #[test]
    fn file_round_trip_and_on_disk_edits() {
        let log = chain(5);
        let parsed = VisitorLog::parse("cafe", &log.chain_text(), &log.head_text()).unwrap();
        assert_eq!(parsed, log);
        assert_eq!(parsed.verify_chain(), ChainStatus::Intact);

        let edited = log.chain_text().replace("visit|2|60|p1", "visit|2|60|p9");
        let parsed = VisitorLog::parse("cafe", &edited, &log.head_text()).unwrap();
        assert_eq!(parsed.verify_chain(), ChainStatus::TamperedAt(2));
        assert!(VisitorLog::parse("cafe", "visit|1|0|a\n", "").is_err());
    }

    proptest! {
        #[test]
        fn appends_always_verify(gaps in proptest::collection::vec(0i64..1000, 0..60)) {
            let mut log = VisitorLog::new("shop");
            let mut t = 0;
            for (i, g) in gaps.iter().enumerate() {
                t += g;
                log.append_visit(pid(&format!("v{i}")), t).unwrap();
            }
            prop_assert_eq!(log.verify_chain(), ChainStatus::Intact);
        }

        #[test]
        fn any_field_mutation_is_located(n in 1usize..80, at in any::<prop::sample::Index>(), field in 0u8..5) {
            let mut log = chain(n);
            let i = at.index(n);
            let v = &mut log.chain[i];
            match field {
                0 => v.seq += 7,
                1 => v.visited_at += 1,
                2 => v.pid = pid("intruder"),
                3 => v.prev_hash.0[0] ^= 1,
                _ => v.entry_hash.0[31] ^= 1,
            }
            prop_assert_eq!(log.verify_chain(), ChainStatus::TamperedAt(i as u64 + 1));
        }

        #[test]
        fn evidence_is_pure(n in 1usize..20, who in 0usize..25, from in 0i64..1200, len in 0i64..600) {
            let log = chain(n);
            let q = |p: &Pid| p.as_str().ends_with('3');
            let p = pid(&format!("p{who}"));
            prop_assert_eq!(log.evidence_query(&p, from, from + len, q), log.evidence_query(&p, from, from + len, q));
        }
    }
}
