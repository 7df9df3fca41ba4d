//! Scenario description and its `key = value` file format.
//!
//! ```text
//! # comment
//! n_agents = 50
//! world_width_m = 80
//! policy.2 = 1.5,600          # version = max_distance_m,min_duration_s
//! agent_policy.0 = 2          # agent id = policy version
//! ```
//! Every key is optional except `n_agents`; see [`Scenario::default`] for
//! the defaults.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::codec::parse_num;
use crate::contactlog::{DEFAULT_RETENTION_DAYS, DEFAULT_TIME_TOLERANCE_S};
use crate::encounter::{ChannelModel, SignificancePolicy, DEFAULT_BEACON_INTERVAL_S, DEFAULT_GAP_TIMEOUT_S};
use crate::notify::DeploymentMode;
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid scenario: {0}")]
pub struct InvalidScenario(pub String);

fn invalid(msg: impl Into<String>) -> InvalidScenario {
    InvalidScenario(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mobility {
    Static,
    RandomWaypoint {
        speed_min: f64,
        speed_max: f64,
        pause_min_s: f64,
        pause_max_s: f64,
    },
}

/// Ground-truth rule: a contiguous stay within `radius_m` for at least
/// `exposure_s` is an exposure; each exposure of a susceptible agent to an
/// infectious one transmits with `transmission_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfectionRule {
    pub radius_m: f64,
    pub exposure_s: i64,
    pub transmission_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeryKind {
    FakeContactClaim,
    PidSwap,
    BogusCertificate,
}

impl ForgeryKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::FakeContactClaim => "fake-contact-claim",
            Self::PidSwap => "pid-swap",
            Self::BogusCertificate => "bogus-certificate",
        }
    }

    fn parse(s: &str) -> Result<Self, InvalidScenario> {
        match s {
            "fake-contact-claim" => Ok(Self::FakeContactClaim),
            "pid-swap" => Ok(Self::PidSwap),
            "bogus-certificate" => Ok(Self::BogusCertificate),
            other => Err(invalid(format!("unknown forgery kind {other:?}"))),
        }
    }
}

impl fmt::Display for ForgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Attack notifications injected at a fixed offset into the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForgeryPlan {
    pub kind: ForgeryKind,
    pub count: usize,
    pub at_s: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world_width_m: f64,
    pub world_height_m: f64,
    pub n_agents: usize,
    pub initial_infectious: usize,
    /// Explicit initially infectious agents; overrides the random choice.
    pub infected_agents: Option<Vec<usize>>,
    pub mobility: Mobility,
    /// Explicit starting positions, one per agent.
    pub positions: Option<Vec<(f64, f64)>>,
    pub beacon_interval_s: i64,
    pub gap_timeout_s: i64,
    pub channel: ChannelModel,
    /// Chance that a single received beacon is body-blocked.
    pub body_block_prob: f64,
    /// Beacons weaker than this are not received.
    pub radio_cutoff_dbm: f64,
    pub infection: InfectionRule,
    pub diagnosis_delay_s: i64,
    pub duration_s: i64,
    /// Absolute time of the first step.
    pub start_time: Timestamp,
    pub rng_seed: u64,
    pub policies: BTreeMap<u32, SignificancePolicy>,
    pub default_policy: u32,
    pub agent_policies: BTreeMap<usize, u32>,
    pub mode: DeploymentMode,
    /// Every agent switches to a fresh PID this often; 0 disables rotation.
    pub pid_rotation_s: i64,
    pub time_tolerance_s: i64,
    pub retention_days: u32,
    pub post_test_margin_days: u32,
    /// Granularity of the opaque location labels agents announce.
    pub location_bucket_s: i64,
    pub forgery: Option<ForgeryPlan>,
}

impl Default for Scenario {
    fn default() -> Self {
        let policies = [SignificancePolicy::v1(), SignificancePolicy::v2()]
            .into_iter()
            .map(|p| (p.version, p))
            .collect();
        Self {
            world_width_m: 100.0,
            world_height_m: 100.0,
            n_agents: 2,
            initial_infectious: 1,
            infected_agents: None,
            mobility: Mobility::RandomWaypoint {
                speed_min: 0.5,
                speed_max: 1.5,
                pause_min_s: 0.0,
                pause_max_s: 1800.0,
            },
            positions: None,
            beacon_interval_s: DEFAULT_BEACON_INTERVAL_S,
            gap_timeout_s: DEFAULT_GAP_TIMEOUT_S,
            channel: ChannelModel::default(),
            body_block_prob: 0.0,
            radio_cutoff_dbm: -100.0,
            infection: InfectionRule {
                radius_m: 3.0,
                exposure_s: 600,
                transmission_prob: 0.5,
            },
            diagnosis_delay_s: 6 * 3600,
            duration_s: 24 * 3600,
            start_time: 0,
            rng_seed: 0,
            policies,
            default_policy: 1,
            agent_policies: BTreeMap::new(),
            mode: DeploymentMode::CertificateRequired,
            pid_rotation_s: 0,
            time_tolerance_s: DEFAULT_TIME_TOLERANCE_S,
            retention_days: DEFAULT_RETENTION_DAYS,
            post_test_margin_days: 0,
            location_bucket_s: 3600,
            forgery: None,
        }
    }
}

impl Scenario {
    pub fn policy_for(&self, agent: usize) -> SignificancePolicy {
        let version = self.agent_policies.get(&agent).copied().unwrap_or(self.default_policy);
        self.policies[&version]
    }

    pub fn validate(&self) -> Result<(), InvalidScenario> {
        if self.n_agents == 0 {
            return Err(invalid("n_agents must be positive"));
        }
        if !(self.world_width_m > 0.0 && self.world_height_m > 0.0) {
            return Err(invalid("world size must be positive"));
        }
        if self.beacon_interval_s <= 0 || self.gap_timeout_s < 0 || self.duration_s <= 0 {
            return Err(invalid("beacon interval and duration must be positive"));
        }
        if self.location_bucket_s <= 0 || self.time_tolerance_s < 0 || self.diagnosis_delay_s < 0 {
            return Err(invalid("bucket, tolerance and diagnosis delay must be non-negative"));
        }
        if self.pid_rotation_s < 0 {
            return Err(invalid("pid_rotation_s must be >= 0"));
        }
        if !(self.infection.radius_m > 0.0) || self.infection.exposure_s < 0 {
            return Err(invalid("infection radius must be positive"));
        }
        if !(0.0..=1.0).contains(&self.infection.transmission_prob) || !(0.0..=1.0).contains(&self.body_block_prob) {
            return Err(invalid("probabilities must lie in [0, 1]"));
        }
        self.channel.validate().map_err(|e| invalid(e.to_string()))?;
        crate::contactlog::ContactLog::new(self.retention_days).map_err(|e| invalid(e.to_string()))?;
        if let Mobility::RandomWaypoint { speed_min, speed_max, pause_min_s, pause_max_s } = self.mobility {
            if !(speed_min > 0.0 && speed_min <= speed_max && 0.0 <= pause_min_s && pause_min_s <= pause_max_s) {
                return Err(invalid("random waypoint needs 0 < speed_min <= speed_max and 0 <= pause_min <= pause_max"));
            }
        }
        match &self.infected_agents {
            Some(ids) => {
                if ids.iter().any(|&i| i >= self.n_agents) {
                    return Err(invalid("infected_agents refers to a missing agent"));
                }
            }
            None if self.initial_infectious > self.n_agents => {
                return Err(invalid("initial_infectious exceeds n_agents"));
            }
            None => {}
        }
        if let Some(pos) = &self.positions {
            if pos.len() != self.n_agents {
                return Err(invalid("positions must list one point per agent"));
            }
            let inside = |&(x, y): &(f64, f64)| (0.0..=self.world_width_m).contains(&x) && (0.0..=self.world_height_m).contains(&y);
            if !pos.iter().all(inside) {
                return Err(invalid("positions must lie inside the world"));
            }
        }
        if !self.policies.contains_key(&self.default_policy) {
            return Err(invalid(format!("default_policy {} is not defined", self.default_policy)));
        }
        for (agent, version) in &self.agent_policies {
            if *agent >= self.n_agents || !self.policies.contains_key(version) {
                return Err(invalid(format!("agent_policy.{agent} = {version} is not resolvable")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, InvalidScenario> {
        let mut s = Scenario::default();
        let mut mobility = "random-waypoint".to_owned();
        let (mut speed_min, mut speed_max, mut pause_min, mut pause_max) = (0.5, 1.5, 0.0, 1800.0);
        let (mut forgery_kind, mut forgery_count, mut forgery_at) = (None, 0usize, 0i64);
        let mut saw_agents = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| invalid(format!("line {}: expected `key = value`", lineno + 1)))?;
            let num = |what: &str| -> Result<f64, InvalidScenario> {
                parse_num::<f64>(value, what).map_err(|e| invalid(format!("line {}: {e}", lineno + 1)))
            };
            let int = |what: &str| -> Result<i64, InvalidScenario> {
                parse_num::<i64>(value, what).map_err(|e| invalid(format!("line {}: {e}", lineno + 1)))
            };
            let uint = |what: &str| -> Result<u64, InvalidScenario> {
                parse_num::<u64>(value, what).map_err(|e| invalid(format!("line {}: {e}", lineno + 1)))
            };

            if let Some(version) = key.strip_prefix("policy.") {
                let version: u32 = parse_num(version, "policy version").map_err(|e| invalid(e.to_string()))?;
                let (d, t) = value
                    .split_once(',')
                    .ok_or_else(|| invalid(format!("{key}: expected `max_distance_m,min_duration_s`")))?;
                let d = parse_num(d.trim(), "max distance").map_err(|e| invalid(e.to_string()))?;
                let t = parse_num(t.trim(), "min duration").map_err(|e| invalid(e.to_string()))?;
                let p = SignificancePolicy::new(version, d, t).map_err(|e| invalid(e.to_string()))?;
                s.policies.insert(version, p);
                continue;
            }
            if let Some(agent) = key.strip_prefix("agent_policy.") {
                let agent: usize = parse_num(agent, "agent id").map_err(|e| invalid(e.to_string()))?;
                s.agent_policies.insert(agent, uint("policy version")? as u32);
                continue;
            }

            match key {
                "world_width_m" => s.world_width_m = num(key)?,
                "world_height_m" => s.world_height_m = num(key)?,
                "n_agents" => {
                    s.n_agents = uint(key)? as usize;
                    saw_agents = true;
                }
                "initial_infectious" => s.initial_infectious = uint(key)? as usize,
                "infected_agents" => {
                    let ids = value
                        .split(',')
                        .map(str::trim)
                        .filter(|v| !v.is_empty())
                        .map(|v| parse_num::<usize>(v, "agent id").map_err(|e| invalid(e.to_string())))
                        .collect::<Result<Vec<_>, _>>()?;
                    s.infected_agents = Some(ids);
                }
                "mobility" => mobility = value.to_owned(),
                "speed_min" => speed_min = num(key)?,
                "speed_max" => speed_max = num(key)?,
                "pause_min_s" => pause_min = num(key)?,
                "pause_max_s" => pause_max = num(key)?,
                "positions" => {
                    let pts = value
                        .split(';')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(|p| {
                            let (x, y) = p.split_once(',').ok_or_else(|| invalid(format!("bad position {p:?}")))?;
                            let x = parse_num(x.trim(), "x").map_err(|e| invalid(e.to_string()))?;
                            let y = parse_num(y.trim(), "y").map_err(|e| invalid(e.to_string()))?;
                            Ok((x, y))
                        })
                        .collect::<Result<Vec<_>, InvalidScenario>>()?;
                    s.positions = Some(pts);
                }
                "beacon_interval_s" => s.beacon_interval_s = int(key)?,
                "gap_timeout_s" => s.gap_timeout_s = int(key)?,
                "ref_power_dbm" => s.channel.ref_power_dbm = num(key)?,
                "path_loss_exponent" => s.channel.path_loss_exponent = num(key)?,
                "shadowing_sigma_db" => s.channel.shadowing_sigma_db = num(key)?,
                "body_shadow_db" => s.channel.body_shadow_db = num(key)?,
                "body_block_prob" => s.body_block_prob = num(key)?,
                "radio_cutoff_dbm" => s.radio_cutoff_dbm = num(key)?,
                "infection_radius_m" => s.infection.radius_m = num(key)?,
                "exposure_s" => s.infection.exposure_s = int(key)?,
                "transmission_prob" => s.infection.transmission_prob = num(key)?,
                "diagnosis_delay_s" => s.diagnosis_delay_s = int(key)?,
                "duration_s" => s.duration_s = int(key)?,
                "start_time" => s.start_time = int(key)?,
                "rng_seed" => s.rng_seed = uint(key)?,
                "default_policy" => s.default_policy = uint(key)? as u32,
                "mode" => {
                    s.mode = match value {
                        "required" => DeploymentMode::CertificateRequired,
                        "optional" => DeploymentMode::CertificateOptional,
                        other => return Err(invalid(format!("mode must be required|optional, got {other:?}"))),
                    }
                }
                "pid_rotation_s" => s.pid_rotation_s = int(key)?,
                "time_tolerance_s" => s.time_tolerance_s = int(key)?,
                "retention_days" => s.retention_days = uint(key)? as u32,
                "post_test_margin_days" => s.post_test_margin_days = uint(key)? as u32,
                "location_bucket_s" => s.location_bucket_s = int(key)?,
                "forgery_kind" => forgery_kind = Some(ForgeryKind::parse(value)?),
                "forgery_count" => forgery_count = uint(key)? as usize,
                "forgery_at_s" => forgery_at = int(key)?,
                other => return Err(invalid(format!("unknown key {other:?}"))),
            }
        }
        if !saw_agents {
            return Err(invalid("missing required key n_agents"));
        }
        s.mobility = match mobility.as_str() {
            "static" => Mobility::Static,
            "random-waypoint" => Mobility::RandomWaypoint {
                speed_min,
                speed_max,
                pause_min_s: pause_min,
                pause_max_s: pause_max,
            },
            other => return Err(invalid(format!("unknown mobility {other:?}"))),
        };
        s.forgery = forgery_kind.map(|kind| ForgeryPlan {
            kind,
            count: forgery_count,
            at_s: forgery_at,
        });
        s.validate()?;
        Ok(s)
    }
}
