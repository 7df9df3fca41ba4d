//! Lab key directory and signed certificates of infection.
//!
//! A certificate binds one or more PIDs to a positive test date and the
//! start of the estimated infectious window. The issuing lab signs a
//! canonical one-line payload with Ed25519; anyone holding the directory of
//! lab public keys can check it.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{Days, NaiveDate};
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::Rng;
use thiserror::Error;

use crate::codec::split_record;
use crate::error::ParseError;
use crate::identity::Pid;
use crate::Timestamp;

pub const SCHEME_ED25519: &str = "ed25519";
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertificateError {
    #[error("a certificate must name at least one PID")]
    EmptyPidList,
    #[error("infectious window starts {infectious_from} after test date {test_date}")]
    InvalidDates {
        test_date: NaiveDate,
        infectious_from: NaiveDate,
    },
    #[error("PID {0} listed twice")]
    DuplicatePid(Pid),
    #[error("invalid lab id {0:?}")]
    InvalidLabId(String),
    #[error("lab {0} already in directory")]
    DuplicateLab(String),
    #[error("unsupported signature scheme {0:?}")]
    UnsupportedScheme(String),
}

fn check_lab_id(lab_id: &str) -> Result<(), CertificateError> {
    if lab_id.is_empty() || lab_id.chars().any(|c| c == '|' || c.is_whitespace() || c.is_control()) {
        return Err(CertificateError::InvalidLabId(lab_id.to_owned()));
    }
    Ok(())
}

/// A lab together with its signing key.
pub struct LabIdentity {
    lab_id: String,
    signing_key: SigningKey,
}

impl fmt::Debug for LabIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabIdentity")
            .field("lab_id", &self.lab_id)
            .field("public_key", &BASE64.encode(self.public_key().as_bytes()))
            .finish()
    }
}

impl LabIdentity {
    pub fn from_seed(lab_id: &str, seed: [u8; 32]) -> Result<Self, CertificateError> {
        check_lab_id(lab_id)?;
        Ok(Self {
            lab_id: lab_id.to_owned(),
            signing_key: SigningKey::from_bytes(&seed),
        })
    }

    pub fn generate<R: Rng + ?Sized>(lab_id: &str, rng: &mut R) -> Result<Self, CertificateError> {
        Self::from_seed(lab_id, rng.random())
    }

    pub fn lab_id(&self) -> &str {
        &self.lab_id
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.signing_key.verifying_key()
    }

    /// `labkey|<lab_id>|ed25519|<base64 secret seed>`
    pub fn to_key_line(&self) -> String {
        format!(
            "labkey|{}|{SCHEME_ED25519}|{}",
            self.lab_id,
            BASE64.encode(self.signing_key.to_bytes())
        )
    }

    pub fn parse_key_line(line: &str) -> Result<Self, ParseError> {
        let parts = split_record(line.trim_end(), "labkey", 4)?;
        if parts[2] != SCHEME_ED25519 {
            return Err(ParseError::new(format!("unsupported scheme {:?}", parts[2])));
        }
        let seed: [u8; 32] = BASE64
            .decode(parts[3])
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| ParseError::new("lab key must be 32 base64-encoded bytes"))?;
        Self::from_seed(parts[1], seed).map_err(|e| ParseError::new(e.to_string()))
    }

    pub fn directory_line(&self) -> String {
        format!(
            "lab|{}|{SCHEME_ED25519}|{}",
            self.lab_id,
            BASE64.encode(self.public_key().as_bytes())
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabKey {
    pub scheme: String,
    pub key: VerifyingKey,
}

/// Published lab public keys, keyed by lab id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabDirectory {
    entries: BTreeMap<String, LabKey>,
}

impl LabDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lab_id: &str, key: VerifyingKey) -> Result<(), CertificateError> {
        check_lab_id(lab_id)?;
        if self.entries.contains_key(lab_id) {
            return Err(CertificateError::DuplicateLab(lab_id.to_owned()));
        }
        self.entries.insert(
            lab_id.to_owned(),
            LabKey {
                scheme: SCHEME_ED25519.to_owned(),
                key,
            },
        );
        Ok(())
    }

    pub fn with_lab(mut self, lab: &LabIdentity) -> Result<Self, CertificateError> {
        self.insert(lab.lab_id(), lab.public_key())?;
        Ok(self)
    }

    pub fn get(&self, lab_id: &str) -> Option<&LabKey> {
        self.entries.get(lab_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One `lab|<lab_id>|<scheme>|<base64 public key>` line per lab.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut dir = Self::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parts = split_record(line, "lab", 4)?;
            if parts[2] != SCHEME_ED25519 {
                return Err(ParseError::new(format!("unsupported scheme {:?}", parts[2])));
            }
            let bytes: [u8; 32] = BASE64
                .decode(parts[3])
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| ParseError::new("public key must be 32 base64-encoded bytes"))?;
            let key = VerifyingKey::from_bytes(&bytes).map_err(|_| ParseError::new("invalid public key"))?;
            dir.insert(parts[1], key).map_err(|e| ParseError::new(e.to_string()))?;
        }
        Ok(dir)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(id, k)| format!("lab|{id}|{}|{}\n", k.scheme, BASE64.encode(k.key.as_bytes())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateOfInfection {
    pub lab_id: String,
    pub test_date: NaiveDate,
    pub infectious_from: NaiveDate,
    pub pids: Vec<Pid>,
    pub signature: Signature,
}

/// `cert|v1|<lab_id>|<test_date>|<infectious_from>|<pid1,pid2,...>`
pub fn canonical_certificate_payload(
    lab_id: &str,
    test_date: NaiveDate,
    infectious_from: NaiveDate,
    pids: &[Pid],
) -> String {
    let pids: Vec<&str> = pids.iter().map(Pid::as_str).collect();
    format!(
        "cert|v1|{lab_id}|{}|{}|{}",
        test_date.format(DATE_FORMAT),
        infectious_from.format(DATE_FORMAT),
        pids.join(",")
    )
}

pub fn issue_certificate(
    lab: &LabIdentity,
    pids: &[Pid],
    test_date: NaiveDate,
    infectious_from: NaiveDate,
) -> Result<CertificateOfInfection, CertificateError> {
    if pids.is_empty() {
        return Err(CertificateError::EmptyPidList);
    }
    if infectious_from > test_date {
        return Err(CertificateError::InvalidDates {
            test_date,
            infectious_from,
        });
    }
    for (i, pid) in pids.iter().enumerate() {
        if pids[..i].contains(pid) {
            return Err(CertificateError::DuplicatePid(pid.clone()));
        }
    }
    let payload = canonical_certificate_payload(&lab.lab_id, test_date, infectious_from, pids);
    Ok(CertificateOfInfection {
        lab_id: lab.lab_id.clone(),
        test_date,
        infectious_from,
        pids: pids.to_vec(),
        signature: lab.signing_key.sign(payload.as_bytes()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateStatus {
    Verified,
    UnknownLab,
    BadSignature,
}

impl CertificateStatus {
    pub fn label(self) -> &'static str {
        match self {
            CertificateStatus::Verified => "VERIFIED",
            CertificateStatus::UnknownLab => "UNKNOWN-LAB",
            CertificateStatus::BadSignature => "BAD-SIGNATURE",
        }
    }
}

impl CertificateOfInfection {
    pub fn payload(&self) -> String {
        canonical_certificate_payload(&self.lab_id, self.test_date, self.infectious_from, &self.pids)
    }

    pub fn to_signed(&self) -> SignedPayload {
        SignedPayload {
            payload: self.payload().into_bytes(),
            signature: self.signature.to_bytes().to_vec(),
        }
    }

    /// Payload line followed by `sig|<base64 signature>`.
    pub fn to_text(&self) -> String {
        format!(
            "{}\nsig|{}\n",
            self.payload(),
            BASE64.encode(self.signature.to_bytes())
        )
    }

    /// Parses the two certificate lines without checking the signature.
    pub fn parse_lines(payload_line: &str, sig_line: &str) -> Result<Self, ParseError> {
        let p = split_record(payload_line.trim_end_matches('\r'), "cert", 6)?;
        if p[1] != "v1" {
            return Err(ParseError::new(format!("unsupported certificate version {:?}", p[1])));
        }
        check_lab_id(p[2]).map_err(|e| ParseError::new(e.to_string()))?;
        let date = |s: &str| {
            NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| ParseError::new(format!("invalid date {s:?}")))
        };
        let pids = p[5]
            .split(',')
            .map(|s| Pid::new(s).map_err(|e| ParseError::new(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let s = split_record(sig_line.trim_end_matches('\r'), "sig", 2)?;
        let sig: [u8; 64] = BASE64
            .decode(s[1])
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| ParseError::new("signature must be 64 base64-encoded bytes"))?;
        Ok(Self {
            lab_id: p[2].to_owned(),
            test_date: date(p[3])?,
            infectious_from: date(p[4])?,
            pids,
            signature: Signature::from_bytes(&sig),
        })
    }

    pub fn parse_text(text: &str) -> Result<Self, ParseError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        match lines.as_slice() {
            [payload, sig] => Self::parse_lines(payload, sig),
            _ => Err(ParseError::new("certificate file must hold exactly two lines")),
        }
    }
}

/// A certificate as raw signed bytes, before any field is trusted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPayload {
    pub payload: Vec<u8>,
    pub signature: Vec<u8>,
}

impl SignedPayload {
    /// Looks up the lab named in the third payload field and checks the
    /// signature over the exact payload bytes.
    pub fn verify(&self, directory: &LabDirectory) -> CertificateStatus {
        let lab_id = self
            .payload
            .split(|b| *b == b'|')
            .nth(2)
            .and_then(|f| std::str::from_utf8(f).ok());
        let Some(lab) = lab_id.and_then(|id| directory.get(id)) else {
            return CertificateStatus::UnknownLab;
        };
        let Ok(sig) = <[u8; 64]>::try_from(self.signature.as_slice()) else {
            return CertificateStatus::BadSignature;
        };
        match lab.key.verify_strict(&self.payload, &Signature::from_bytes(&sig)) {
            Ok(()) => CertificateStatus::Verified,
            Err(_) => CertificateStatus::BadSignature,
        }
    }
}

pub fn verify_certificate(cert: &CertificateOfInfection, directory: &LabDirectory) -> CertificateStatus {
    cert.to_signed().verify(directory)
}

/// Midnight UTC of `date`, in seconds since the Unix epoch.
pub fn day_start(date: NaiveDate) -> Timestamp {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
}

/// The UTC calendar day containing `t`.
pub fn date_of(t: Timestamp) -> NaiveDate {
    chrono::DateTime::from_timestamp(t, 0)
        .expect("timestamp in chrono range")
        .date_naive()
}

/// The certificate's PIDs if `contact_time` falls between the start of the
/// infectious day and the end of the test day plus `post_test_margin_days`.
pub fn pids_covering_contact(
    cert: &CertificateOfInfection,
    contact_time: Timestamp,
    post_test_margin_days: u32,
) -> Vec<Pid> {
    let start = day_start(cert.infectious_from);
    let end = cert
        .test_date
        .checked_add_days(Days::new(u64::from(post_test_margin_days) + 1))
        .map(day_start)
        .unwrap_or(Timestamp::MAX);
    if contact_time >= start && contact_time < end {
        cert.pids.clone()
    } else {
        Vec::new()
    }
}
