//! Pseudonymous identities.
//!
//! A [`Pid`] is an opaque symbol string used only for contact tracing, a
//! [`Pad`] is the mailbox address notifications are posted to. A "trusted"
//! PID is a hash commitment over personal data and a secret phrase, so its
//! owner can later prove the PID was theirs without any prior registration.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{decode_field, encode_field, split_record};
use crate::error::ParseError;
use crate::Timestamp;

/// Hex characters kept from the commitment digest (128 bits).
pub const PID_HEX_LEN: usize = 32;
pub const PID_MAX_LEN: usize = 64;

/// Separates personal data from the phrase in the commitment preimage.
const COMMITMENT_SEPARATOR: char = '\x1F';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("invalid PID {0:?}")]
    InvalidPid(String),
    #[error("invalid PAD {0:?}")]
    InvalidPad(String),
    #[error("personal data and phrase must both be non-empty")]
    EmptyInput,
    #[error("window start {from} is after window end {to}")]
    InvalidWindow { from: Timestamp, to: Timestamp },
    #[error("an identity period needs at least one PID")]
    EmptyPeriod,
    #[error("PID activation times must be strictly increasing")]
    NonIncreasingActivation,
}

/// Pseudo-ID: 1 to 64 printable, non-whitespace characters, never `|` or `,`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pid(String);

impl Pid {
    pub fn new(value: impl Into<String>) -> Result<Self, IdentityError> {
        let value = value.into();
        let len = value.chars().count();
        let charset_ok = value
            .chars()
            .all(|c| !c.is_whitespace() && !c.is_control() && c != '|' && c != ',');
        if len == 0 || len > PID_MAX_LEN || !charset_ok {
            return Err(IdentityError::InvalidPid(value));
        }
        Ok(Self(value))
    }

    /// A fresh 128-bit PID rendered as 32 lowercase hex characters.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let bytes: [u8; 16] = rng.random();
        Self(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Pid {
    type Err = IdentityError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pid::new(s)
    }
}

/// Pseudo-address in mailbox form `local@domain`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pad(String);

impl Pad {
    pub fn new(value: impl Into<String>) -> Result<Self, IdentityError> {
        let value = value.into();
        let valid = match value.split_once('@') {
            Some((local, domain)) => {
                !local.is_empty()
                    && !domain.is_empty()
                    && !domain.contains('@')
                    && value
                        .chars()
                        .all(|c| !c.is_whitespace() && !c.is_control() && c != '|')
            }
            None => false,
        };
        if valid {
            Ok(Self(value))
        } else {
            Err(IdentityError::InvalidPad(value))
        }
    }

    /// The conventional PAD for a PID on a given mail domain.
    pub fn for_pid(pid: &Pid, domain: &str) -> Result<Self, IdentityError> {
        Pad::new(format!("{pid}@{domain}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Pad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Pad {
    type Err = IdentityError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pad::new(s)
    }
}

/// Deterministic random PID for a fixed seed.
pub fn generate_random_pid(seed: u64) -> Pid {
    Pid::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// A trusted PID together with the preimage it commits to.
#[derive(Clone, PartialEq, Eq)]
pub struct TrustedPidCommitment {
    pub personal_data: String,
    pub phrase: String,
    pub pid: Pid,
}

// The phrase is a secret; keep it out of debug output.
impl fmt::Debug for TrustedPidCommitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrustedPidCommitment")
            .field("personal_data", &self.personal_data)
            .field("pid", &self.pid)
            .finish_non_exhaustive()
    }
}

impl TrustedPidCommitment {
    /// `trusted-pid|<pid>|<personal_data%>|`. The phrase is never written.
    pub fn to_line(&self) -> String {
        format!("trusted-pid|{}|{}|", self.pid, encode_field(&self.personal_data))
    }
}

/// What a commitment file reveals: the PID and the personal data it binds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishedCommitment {
    pub pid: Pid,
    pub personal_data: String,
}

impl PublishedCommitment {
    pub fn parse_line(line: &str) -> Result<Self, ParseError> {
        let parts = split_record(line, "trusted-pid", 4)?;
        if !parts[3].is_empty() {
            return Err(ParseError::new("trailing field of trusted-pid record must be empty"));
        }
        let pid = Pid::new(parts[1]).map_err(|e| ParseError::new(e.to_string()))?;
        Ok(Self {
            pid,
            personal_data: decode_field(parts[2])?,
        })
    }

    pub fn to_line(&self) -> String {
        format!("trusted-pid|{}|{}|", self.pid, encode_field(&self.personal_data))
    }
}

fn commitment_digest(personal_data: &str, phrase: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(personal_data.as_bytes());
    hasher.update(COMMITMENT_SEPARATOR.to_string().as_bytes());
    hasher.update(phrase.as_bytes());
    let mut hex = hex::encode(hasher.finalize());
    hex.truncate(PID_HEX_LEN);
    hex
}

pub fn generate_trusted_pid(
    personal_data: &str,
    phrase: &str,
) -> Result<TrustedPidCommitment, IdentityError> {
    if personal_data.is_empty() || phrase.is_empty() {
        return Err(IdentityError::EmptyInput);
    }
    Ok(TrustedPidCommitment {
        personal_data: personal_data.to_owned(),
        phrase: phrase.to_owned(),
        pid: Pid(commitment_digest(personal_data, phrase)),
    })
}

/// True iff `claimed` is the trusted PID derived from exactly this pair.
pub fn prove_pid_ownership(personal_data: &str, phrase: &str, claimed: &Pid) -> bool {
    generate_trusted_pid(personal_data, phrase)
        .map(|c| &c.pid == claimed)
        .unwrap_or(false)
}

/// The PIDs one user announces over a period, all reachable at one PAD.
///
/// Each PID is active from its activation time until the next PID's
/// activation; the last one stays active indefinitely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityPeriod {
    pids: Vec<(Timestamp, Pid)>,
    pad: Pad,
}

impl IdentityPeriod {
    pub fn new(pids: Vec<(Timestamp, Pid)>, pad: Pad) -> Result<Self, IdentityError> {
        if pids.is_empty() {
            return Err(IdentityError::EmptyPeriod);
        }
        if pids.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(IdentityError::NonIncreasingActivation);
        }
        Ok(Self { pids, pad })
    }

    pub fn single(pid: Pid, activated: Timestamp, pad: Pad) -> Self {
        Self {
            pids: vec![(activated, pid)],
            pad,
        }
    }

    /// Starts a new PID at `at`, which must be after the last activation.
    pub fn rotate(&mut self, at: Timestamp, pid: Pid) -> Result<(), IdentityError> {
        match self.pids.last() {
            Some((last, _)) if *last >= at => Err(IdentityError::NonIncreasingActivation),
            _ => {
                self.pids.push((at, pid));
                Ok(())
            }
        }
    }

    pub fn pad(&self) -> &Pad {
        &self.pad
    }

    pub fn activations(&self) -> &[(Timestamp, Pid)] {
        &self.pids
    }

    /// The PID in use at `t`, if any has been activated yet.
    pub fn pid_at(&self, t: Timestamp) -> Option<&Pid> {
        self.pids
            .iter()
            .rev()
            .find(|(activated, _)| *activated <= t)
            .map(|(_, pid)| pid)
    }

    pub fn current(&self) -> &Pid {
        &self.pids.last().expect("identity period is never empty").1
    }
}

/// Every PID whose activation interval intersects `[from, to]`.
pub fn active_pids_in_window(
    period: &IdentityPeriod,
    from: Timestamp,
    to: Timestamp,
) -> Result<Vec<Pid>, IdentityError> {
    if from > to {
        return Err(IdentityError::InvalidWindow { from, to });
    }
    let acts = &period.pids;
    Ok(acts
        .iter()
        .enumerate()
        .filter(|(i, (start, _))| {
            let before_end = *start <= to;
            let after_start = acts.get(i + 1).is_none_or(|(next, _)| *next > from);
            before_end && after_start
        })
        .map(|(_, (_, pid))| pid.clone())
        .collect())
}
