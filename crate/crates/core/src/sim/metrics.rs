use std::collections::BTreeMap;
use std::fmt;

use crate::notify::VerificationStatus;
use crate::Timestamp;

use super::scenario::ForgeryKind;

/// Detection quality of one run, scored against simulator ground truth.
///
/// Exposure counts are over distinct (diagnosed agent, peer) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimMetrics {
    pub true_exposures: usize,
    pub notified_true: usize,
    pub notified_false: usize,
    pub missed: usize,
    pub rejected_forgeries: usize,
    pub accepted_forgeries: usize,
    pub infections: usize,
    pub diagnoses: usize,
    pub contacts_logged: usize,
    pub notifications_built: usize,
    pub forgeries_injected: usize,
    pub verdicts_accepted: usize,
    pub verdicts_rejected: usize,
    /// Delivered but not yet verified, in a mailbox or deferred.
    pub pending: usize,
    pub by_status: BTreeMap<&'static str, usize>,
}

impl SimMetrics {
    /// Every delivered message has exactly one fate.
    pub fn is_conserved(&self) -> bool {
        self.notifications_built + self.forgeries_injected
            == self.verdicts_accepted + self.verdicts_rejected + self.pending
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |name: &str, value: usize| out.push_str(&format!("metric|{name}|{value}\n"));
        line("true_exposures", self.true_exposures);
        line("notified_true", self.notified_true);
        line("notified_false", self.notified_false);
        line("missed", self.missed);
        line("rejected_forgeries", self.rejected_forgeries);
        line("accepted_forgeries", self.accepted_forgeries);
        line("infections", self.infections);
        line("diagnoses", self.diagnoses);
        line("contacts_logged", self.contacts_logged);
        line("notifications_built", self.notifications_built);
        line("forgeries_injected", self.forgeries_injected);
        line("verdicts_accepted", self.verdicts_accepted);
        line("verdicts_rejected", self.verdicts_rejected);
        line("pending", self.pending);
        for (label, n) in &self.by_status {
            line(&format!("status.{label}"), *n);
        }
        out
    }
}

/// Where a delivered notification came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Genuine { origin: usize },
    Forged { attacker: usize, kind: ForgeryKind },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Genuine { origin } => write!(f, "genuine|{origin}"),
            Self::Forged { attacker, kind } => write!(f, "{kind}|{attacker}"),
        }
    }
}

/// One line of the replayable event trace.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Infect { at: Timestamp, source: usize, target: usize },
    Logged { at: Timestamp, agent: usize, peer: usize, dwell_s: i64, policy_version: u32 },
    Rotate { at: Timestamp, agent: usize },
    Diagnose { at: Timestamp, agent: usize, pids: usize, notifications: usize },
    Deliver { at: Timestamp, to: usize, from: Provenance },
    Verdict { at: Timestamp, receiver: usize, from: Provenance, status: VerificationStatus },
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Infect { at, source, target } => write!(f, "event|{at}|infect|{source}|{target}"),
            Self::Logged { at, agent, peer, dwell_s, policy_version } => {
                write!(f, "event|{at}|logged|{agent}|{peer}|{dwell_s}|{policy_version}")
            }
            Self::Rotate { at, agent } => write!(f, "event|{at}|rotate|{agent}"),
            Self::Diagnose { at, agent, pids, notifications } => {
                write!(f, "event|{at}|diagnose|{agent}|{pids}|{notifications}")
            }
            Self::Deliver { at, to, from } => write!(f, "event|{at}|deliver|{to}|{from}"),
            Self::Verdict { at, receiver, from, status } => {
                write!(f, "event|{at}|verdict|{receiver}|{from}|{status}")
            }
        }
    }
}
