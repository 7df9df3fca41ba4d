//! Contact identification: beacon exchange, RSSI distance estimation,
//! session accumulation and significant-contact classification.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::codec::{parse_num, split_record};
use crate::error::ParseError;
use crate::identity::{Pad, Pid};
use crate::Timestamp;

pub const RSSI_MIN_DBM: f64 = -120.0;
pub const RSSI_MAX_DBM: f64 = 0.0;
pub const DEFAULT_BEACON_INTERVAL_S: i64 = 10;
pub const DEFAULT_GAP_TIMEOUT_S: i64 = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncounterError {
    #[error("location label must not contain `|`: {0:?}")]
    InvalidLocation(String),
    #[error("RSSI {0} dBm outside [-120, 0]")]
    RssiOutOfRange(f64),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("sample at {at} precedes last seen {last_seen} for peer {peer}")]
    ClockRegression {
        peer: Pid,
        at: Timestamp,
        last_seen: Timestamp,
    },
    #[error("invalid channel model: {0}")]
    InvalidChannel(&'static str),
    #[error("invalid significance policy: {0}")]
    InvalidPolicy(&'static str),
}

/// The four-field payload a device announces during a contact. Time and
/// location are the sender's own notions and are never interpreted by
/// anyone else.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InformationRecord {
    pub pid: Pid,
    pub pad: Pad,
    pub local_time: Timestamp,
    pub local_location: String,
}

impl InformationRecord {
    pub fn new(
        pid: Pid,
        pad: Pad,
        local_time: Timestamp,
        local_location: impl Into<String>,
    ) -> Result<Self, EncounterError> {
        let local_location = local_location.into();
        if local_location.contains('|') {
            return Err(EncounterError::InvalidLocation(local_location));
        }
        Ok(Self {
            pid,
            pad,
            local_time,
            local_location,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssiSample {
    pub at: Timestamp,
    pub rssi_dbm: f64,
}

impl RssiSample {
    pub fn new(at: Timestamp, rssi_dbm: f64) -> Result<Self, EncounterError> {
        if !(RSSI_MIN_DBM..=RSSI_MAX_DBM).contains(&rssi_dbm) {
            return Err(EncounterError::RssiOutOfRange(rssi_dbm));
        }
        Ok(Self { at, rssi_dbm })
    }
}

/// Log-distance path-loss channel with lognormal shadowing and an extra
/// attenuation term for a body blocking line of sight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub ref_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub body_shadow_db: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            ref_power_dbm: -59.0,
            path_loss_exponent: 2.0,
            shadowing_sigma_db: 0.0,
            body_shadow_db: 0.0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), EncounterError> {
        if !(1.0..=6.0).contains(&self.path_loss_exponent) {
            return Err(EncounterError::InvalidChannel("path-loss exponent must be in [1, 6]"));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(EncounterError::InvalidChannel("shadowing sigma must be >= 0"));
        }
        if !(self.body_shadow_db >= 0.0) {
            return Err(EncounterError::InvalidChannel("body shadow must be >= 0"));
        }
        if !self.ref_power_dbm.is_finite() {
            return Err(EncounterError::InvalidChannel("reference power must be finite"));
        }
        Ok(())
    }
}

/// Inverts the log-distance model: `10^((P_ref - rssi) / (10 n))` meters.
pub fn rssi_to_distance(rssi_dbm: f64, model: &ChannelModel) -> f64 {
    10f64.powf((model.ref_power_dbm - rssi_dbm) / (10.0 * model.path_loss_exponent))
}

/// Forward channel used by the simulator. `noise_draw` is a standard-normal
/// variate scaled by the model's shadowing sigma.
pub fn distance_to_rssi(
    true_distance_m: f64,
    model: &ChannelModel,
    noise_draw: f64,
    body_blocked: bool,
) -> Result<f64, EncounterError> {
    if !(true_distance_m > 0.0) {
        return Err(EncounterError::NonPositiveDistance(true_distance_m));
    }
    let mut rssi = model.ref_power_dbm - 10.0 * model.path_loss_exponent * true_distance_m.log10()
        + noise_draw * model.shadowing_sigma_db;
    if body_blocked {
        rssi -= model.body_shadow_db;
    }
    Ok(rssi)
}

/// Versioned significant-contact rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificancePolicy {
    pub version: u32,
    pub max_distance_m: f64,
    pub min_duration_s: i64,
}

impl SignificancePolicy {
    pub fn new(version: u32, max_distance_m: f64, min_duration_s: i64) -> Result<Self, EncounterError> {
        if version == 0 {
            return Err(EncounterError::InvalidPolicy("version must be positive"));
        }
        if !(max_distance_m > 0.0) || !max_distance_m.is_finite() {
            return Err(EncounterError::InvalidPolicy("max distance must be positive"));
        }
        if min_duration_s < 0 {
            return Err(EncounterError::InvalidPolicy("min duration must be >= 0"));
        }
        Ok(Self {
            version,
            max_distance_m,
            min_duration_s,
        })
    }

    /// Initial, deliberately pessimistic rule: 3 m for 10 minutes.
    pub fn v1() -> Self {
        Self {
            version: 1,
            max_distance_m: 3.0,
            min_duration_s: 600,
        }
    }

    /// Tightened rule: 1.5 m for 10 minutes.
    pub fn v2() -> Self {
        Self {
            version: 2,
            max_distance_m: 1.5,
            min_duration_s: 600,
        }
    }

    /// `policy|<version>|<max_distance_m>|<min_duration_s>`
    pub fn parse_line(line: &str) -> Result<Self, ParseError> {
        let parts = split_record(line.trim_end(), "policy", 4)?;
        let version = parse_num(parts[1], "policy version")?;
        let max = parse_num(parts[2], "max distance")?;
        let min = parse_num(parts[3], "min duration")?;
        Self::new(version, max, min).map_err(|e| ParseError::new(e.to_string()))
    }
}

impl fmt::Display for SignificancePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "policy|{}|{}|{}",
            self.version, self.max_distance_m, self.min_duration_s
        )
    }
}

/// An ongoing or closed exchange with one peer. The records are the ones
/// exchanged when the session opened.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSession {
    pub peer_record: InformationRecord,
    pub own_record: InformationRecord,
    pub samples: Vec<RssiSample>,
    pub started: Timestamp,
    pub last_seen: Timestamp,
}

impl ContactSession {
    fn open(own: InformationRecord, peer: InformationRecord, sample: RssiSample) -> Self {
        Self {
            peer_record: peer,
            own_record: own,
            samples: vec![sample],
            started: sample.at,
            last_seen: sample.at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Significance {
    Significant,
    NotSignificant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceVerdict {
    pub significance: Significance,
    /// Longest contiguous time spent within the policy distance.
    pub dwell_s: i64,
}

impl SignificanceVerdict {
    pub fn is_significant(&self) -> bool {
        self.significance == Significance::Significant
    }
}

/// Max contiguous dwell within the policy distance. Time between samples
/// `i` and `i + 1` counts only when both estimates are within threshold.
/// A session with no in-threshold sample is never significant, even under
/// a zero minimum duration.
pub fn classify_contact(
    session: &ContactSession,
    policy: &SignificancePolicy,
    model: &ChannelModel,
) -> SignificanceVerdict {
    let within: Vec<bool> = session
        .samples
        .iter()
        .map(|s| rssi_to_distance(s.rssi_dbm, model) <= policy.max_distance_m)
        .collect();

    let mut best = 0;
    let mut run = 0;
    for (pair, hit) in session.samples.windows(2).zip(within.windows(2)) {
        if hit[0] && hit[1] {
            run += pair[1].at - pair[0].at;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    let any_within = within.iter().any(|w| *w);
    let significance = if any_within && best >= policy.min_duration_s {
        Significance::Significant
    } else {
        Significance::NotSignificant
    };
    SignificanceVerdict {
        significance,
        dwell_s: best,
    }
}

/// Open sessions of one device, keyed by peer PID.
#[derive(Debug, Clone, Default)]
pub struct SessionTable {
    sessions: BTreeMap<Pid, ContactSession>,
}

impl SessionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn get(&self, peer: &Pid) -> Option<&ContactSession> {
        self.sessions.get(peer)
    }

    pub fn contains_peer(&self, peer: &Pid) -> bool {
        self.sessions.contains_key(peer)
    }

    /// Records one received beacon. Returns the previous session with this
    /// peer when the gap since its last sample exceeded `gap_timeout_s`.
    pub fn ingest_beacon(
        &mut self,
        own: &InformationRecord,
        peer: &InformationRecord,
        sample: RssiSample,
        gap_timeout_s: i64,
    ) -> Result<Option<ContactSession>, EncounterError> {
        match self.sessions.get_mut(&peer.pid) {
            Some(session) if sample.at < session.last_seen => Err(EncounterError::ClockRegression {
                peer: peer.pid.clone(),
                at: sample.at,
                last_seen: session.last_seen,
            }),
            Some(session) if sample.at - session.last_seen <= gap_timeout_s => {
                session.samples.push(sample);
                session.last_seen = sample.at;
                Ok(None)
            }
            _ => {
                let fresh = ContactSession::open(own.clone(), peer.clone(), sample);
                Ok(self.sessions.insert(peer.pid.clone(), fresh))
            }
        }
    }

    /// Removes and returns every session with `last_seen + gap_timeout_s < now`.
    pub fn close_expired_sessions(&mut self, now: Timestamp, gap_timeout_s: i64) -> Vec<ContactSession> {
        let stale: Vec<Pid> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.last_seen + gap_timeout_s < now)
            .map(|(k, _)| k.clone())
            .collect();
        stale
            .into_iter()
            .filter_map(|k| self.sessions.remove(&k))
            .collect()
    }

    /// Closes every session regardless of age.
    pub fn drain(&mut self) -> Vec<ContactSession> {
        std::mem::take(&mut self.sessions).into_values().collect()
    }
}
