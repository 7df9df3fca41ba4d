//! Deterministic agent-based simulation of the whole protocol.
//!
//! Agents walk a rectangular world and beacon every `beacon_interval_s`.
//! Each received beacon goes through the noisy channel into the receiver's
//! session table. Infection follows a synthetic ground-truth rule that the
//! devices never see. Diagnosed agents get a certificate from the scenario
//! lab, notify their logged contacts and stop beaconing. Every receiver
//! runs the full verification pipeline on what lands in its mailbox.
//!
//! The world, the radio and the attacker each draw from their own seeded
//! stream, so changing channel noise leaves the epidemic untouched.

mod metrics;
mod mobility;
mod scenario;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::certificates::{date_of, day_start, issue_certificate, CertificateOfInfection, LabDirectory, LabIdentity};
use crate::contactlog::{ContactLog, LogEntry, SECONDS_PER_DAY};
use crate::encounter::{
    classify_contact, distance_to_rssi, ContactSession, InformationRecord, RssiSample, SessionTable,
    SignificancePolicy, RSSI_MAX_DBM, RSSI_MIN_DBM,
};
use crate::identity::{active_pids_in_window, IdentityPeriod, Pad, Pid};
use crate::notify::{
    build_notifications, verify_notification, InMemoryMailboxes, Notification, VerificationStatus, VerifierConfig,
};
use crate::Timestamp;

pub use metrics::{Provenance, SimMetrics, TraceEvent};
use mobility::Walker;
pub use scenario::{ForgeryKind, ForgeryPlan, InfectionRule, InvalidScenario, Mobility, Scenario};

pub const SIM_LAB_ID: &str = "sim-lab";
pub const ROGUE_LAB_ID: &str = "rogue-lab";
pub const PAD_DOMAIN: &str = "sim.local";
/// Co-located agents are treated as this far apart by the channel.
const MIN_RADIO_DISTANCE_M: f64 = 0.01;

const STREAM_WORLD: u64 = 0;
const STREAM_RADIO: u64 = 1;
const STREAM_ATTACK: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Susceptible,
    Infectious,
    Diagnosed,
}

#[derive(Debug, Clone)]
struct Envelope {
    from: Provenance,
    notification: Notification,
}

/// One simulated person and their device.
#[derive(Debug, Clone)]
pub struct Agent {
    id: usize,
    identity: IdentityPeriod,
    sessions: SessionTable,
    log: ContactLog,
    walker: Walker,
    health: Health,
    infected_at: Option<Timestamp>,
    diagnosed_at: Option<Timestamp>,
    policy: SignificancePolicy,
    /// Notifications from peers we are still in contact with.
    deferred: Vec<Envelope>,
}

impl Agent {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn pid(&self) -> &Pid {
        self.identity.current()
    }

    pub fn pad(&self) -> &Pad {
        self.identity.pad()
    }

    pub fn identity(&self) -> &IdentityPeriod {
        &self.identity
    }

    pub fn sessions(&self) -> &SessionTable {
        &self.sessions
    }

    pub fn log(&self) -> &ContactLog {
        &self.log
    }

    pub fn position(&self) -> (f64, f64) {
        self.walker.pos
    }

    pub fn health(&self) -> Health {
        self.health
    }

    pub fn infected_at(&self) -> Option<Timestamp> {
        self.infected_at
    }

    pub fn diagnosed_at(&self) -> Option<Timestamp> {
        self.diagnosed_at
    }

    pub fn policy(&self) -> &SignificancePolicy {
        &self.policy
    }

    /// Diagnosed agents stay home and stop beaconing.
    pub fn is_active(&self) -> bool {
        self.health != Health::Diagnosed
    }
}

/// Ground-truth state of one unordered agent pair.
#[derive(Debug, Clone, Default)]
struct PairTrack {
    episode_start: Option<Timestamp>,
    last_in_range: Timestamp,
    run_start: Option<Timestamp>,
    run_qualified: bool,
}

/// A within-radius run that reached the exposure duration.
#[derive(Debug, Clone, Copy)]
struct QualifyingContact {
    a: usize,
    b: usize,
    /// Start of the radio episode the run belongs to. Devices time-stamp a
    /// contact by the moment their session opened, so this is what the
    /// certificate window is compared against.
    episode_start: Timestamp,
}

pub struct Simulation {
    scenario: Scenario,
    now: Timestamp,
    agents: Vec<Agent>,
    pid_owner: BTreeMap<Pid, usize>,
    pad_owner: BTreeMap<Pad, usize>,
    pairs: Vec<PairTrack>,
    qualifying: Vec<QualifyingContact>,
    world_rng: ChaCha8Rng,
    radio_rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
    lab: LabIdentity,
    directory: LabDirectory,
    verifier: VerifierConfig,
    mailboxes: InMemoryMailboxes<Envelope>,
    genuine_sent: Vec<(usize, Notification)>,
    accepted_pairs: BTreeSet<(usize, usize)>,
    counters: SimMetrics,
    trace: Vec<TraceEvent>,
    forgery_done: bool,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, InvalidScenario> {
        scenario.validate()?;
        let mut world_rng = stream(scenario.rng_seed, STREAM_WORLD);
        let lab = LabIdentity::generate(SIM_LAB_ID, &mut world_rng).expect("constant lab id is valid");
        let directory = LabDirectory::new().with_lab(&lab).expect("fresh directory");
        let world = (scenario.world_width_m, scenario.world_height_m);

        let mut agents = Vec::with_capacity(scenario.n_agents);
        let mut pid_owner = BTreeMap::new();
        let mut pad_owner = BTreeMap::new();
        for id in 0..scenario.n_agents {
            let pos = match &scenario.positions {
                Some(p) => p[id],
                None => (world_rng.random_range(0.0..=world.0), world_rng.random_range(0.0..=world.1)),
            };
            let walker = Walker::new(pos, &scenario.mobility, world, &mut world_rng);
            let pid = Pid::random(&mut world_rng);
            let pad = Pad::for_pid(&pid, PAD_DOMAIN).expect("hex PID makes a valid PAD");
            pid_owner.insert(pid.clone(), id);
            pad_owner.insert(pad.clone(), id);
            agents.push(Agent {
                id,
                identity: IdentityPeriod::single(pid, scenario.start_time, pad),
                sessions: SessionTable::new(),
                log: ContactLog::new(scenario.retention_days).expect("validated retention"),
                walker,
                health: Health::Susceptible,
                infected_at: None,
                diagnosed_at: None,
                policy: scenario.policy_for(id),
                deferred: Vec::new(),
            });
        }

        let mut seeds = match &scenario.infected_agents {
            Some(ids) => ids.clone(),
            None => rand::seq::index::sample(&mut world_rng, scenario.n_agents, scenario.initial_infectious).into_vec(),
        };
        seeds.sort_unstable();
        seeds.dedup();
        let mut counters = SimMetrics::default();
        for id in seeds {
            agents[id].health = Health::Infectious;
            agents[id].infected_at = Some(scenario.start_time);
            counters.infections += 1;
        }

        let n = scenario.n_agents;
        Ok(Self {
            now: scenario.start_time,
            pairs: vec![PairTrack::default(); n * n.saturating_sub(1) / 2],
            verifier: VerifierConfig {
                mode: scenario.mode,
                time_tolerance_s: scenario.time_tolerance_s,
                post_test_margin_days: scenario.post_test_margin_days,
            },
            radio_rng: stream(scenario.rng_seed, STREAM_RADIO),
            attack_rng: stream(scenario.rng_seed, STREAM_ATTACK),
            scenario,
            agents,
            pid_owner,
            pad_owner,
            qualifying: Vec::new(),
            world_rng,
            lab,
            directory,
            mailboxes: InMemoryMailboxes::new(),
            genuine_sent: Vec::new(),
            accepted_pairs: BTreeSet::new(),
            counters,
            trace: Vec::new(),
            forgery_done: false,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, id: usize) -> &Agent {
        &self.agents[id]
    }

    pub fn directory(&self) -> &LabDirectory {
        &self.directory
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn trace_text(&self) -> String {
        self.trace.iter().map(|e| format!("{e}\n")).collect()
    }

    /// Advances the world by `dt_s` one-second ticks.
    pub fn step_world(&mut self, dt_s: i64) {
        assert!(dt_s > 0, "step_world needs a positive dt");
        for _ in 0..dt_s {
            self.tick();
        }
    }

    fn tick(&mut self) {
        let t = self.now;
        let offset = t - self.scenario.start_time;

        self.run_diagnoses(t);
        let rotation = self.scenario.pid_rotation_s;
        if rotation > 0 && offset > 0 && offset % rotation == 0 {
            self.rotate_pids(t);
        }
        if offset % self.scenario.beacon_interval_s == 0 {
            self.exchange_beacons(t);
            for id in 0..self.agents.len() {
                let closed = self.agents[id].sessions.close_expired_sessions(t, self.scenario.gap_timeout_s);
                for s in closed {
                    self.close_session(id, s, t);
                }
            }
        }
        if offset > 0 && offset % SECONDS_PER_DAY == 0 {
            for a in &mut self.agents {
                a.log.prune(t);
            }
        }
        if let Some(plan) = self.scenario.forgery {
            if !self.forgery_done && offset == plan.at_s {
                self.forgery_done = true;
                self.inject_forgeries(plan.kind, plan.count);
            }
        }
        self.poll_mailboxes(t);

        let world = (self.scenario.world_width_m, self.scenario.world_height_m);
        for a in &mut self.agents {
            if a.is_active() {
                a.walker.advance(1.0, &self.scenario.mobility, world, &mut self.world_rng);
            }
        }
        self.now += 1;
    }

    /// Closes every session, injects a still-scheduled attack and verifies
    /// everything left in the mailboxes.
    pub fn finish(&mut self) {
        let t = self.now;
        for id in 0..self.agents.len() {
            for s in self.agents[id].sessions.drain() {
                self.close_session(id, s, t);
            }
        }
        if let Some(plan) = self.scenario.forgery {
            if !self.forgery_done {
                self.forgery_done = true;
                self.inject_forgeries(plan.kind, plan.count);
            }
        }
        self.poll_mailboxes(t);
    }

    fn location_label(&self, agent: usize, t: Timestamp) -> String {
        let bucket = (t - self.scenario.start_time).div_euclid(self.scenario.location_bucket_s);
        format!("loc-{agent}-{bucket}")
    }

    fn record(&self, agent: usize, t: Timestamp) -> InformationRecord {
        let a = &self.agents[agent];
        InformationRecord::new(a.pid().clone(), a.pad().clone(), t, self.location_label(agent, t))
            .expect("generated labels contain no separator")
    }

    fn rssi(&self, d: f64, noise: f64, blocked: bool) -> f64 {
        distance_to_rssi(d.max(MIN_RADIO_DISTANCE_M), &self.scenario.channel, noise, blocked)
            .expect("distance clamped positive")
    }

    fn exchange_beacons(&mut self, t: Timestamp) {
        let records: Vec<Option<InformationRecord>> = (0..self.agents.len())
            .map(|i| self.agents[i].is_active().then(|| self.record(i, t)))
            .collect();
        let sigma = self.scenario.channel.shadowing_sigma_db;
        let block_p = self.scenario.body_block_prob;
        let cutoff = self.scenario.radio_cutoff_dbm;

        for i in 0..records.len() {
            let Some(ri) = &records[i] else { continue };
            for j in i + 1..records.len() {
                let Some(rj) = &records[j] else { continue };
                let (pi, pj) = (self.agents[i].walker.pos, self.agents[j].walker.pos);
                let d = (pi.0 - pj.0).hypot(pi.1 - pj.1);
                let clean = self.rssi(d, 0.0, false);
                self.track_truth(i, j, d, clean >= cutoff, t);

                for (rx, own, peer) in [(j, rj, ri), (i, ri, rj)] {
                    let noise = if sigma > 0.0 { self.radio_rng.sample(StandardNormal) } else { 0.0 };
                    let blocked = block_p > 0.0 && self.radio_rng.random_bool(block_p);
                    let rssi = if noise == 0.0 && !blocked { clean } else { self.rssi(d, noise, blocked) };
                    if rssi < cutoff {
                        continue;
                    }
                    let sample = RssiSample::new(t, rssi.clamp(RSSI_MIN_DBM, RSSI_MAX_DBM)).expect("clamped");
                    let closed = self.agents[rx]
                        .sessions
                        .ingest_beacon(own, peer, sample, self.scenario.gap_timeout_s)
                        .expect("simulation time is monotone");
                    if let Some(s) = closed {
                        self.close_session(rx, s, t);
                    }
                }
            }
        }
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        let n = self.agents.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// `in_range` is whether a noiseless beacon would be received.
    fn track_truth(&mut self, i: usize, j: usize, d: f64, in_range: bool, t: Timestamp) {
        let within = in_range && d <= self.scenario.infection.radius_m;
        let gap = self.scenario.gap_timeout_s;
        let exposure = self.scenario.infection.exposure_s;
        let idx = self.pair_index(i, j);
        let p = &mut self.pairs[idx];

        if in_range {
            if p.episode_start.is_none() || t - p.last_in_range > gap {
                p.episode_start = Some(t);
            }
            p.last_in_range = t;
        }
        if !within {
            p.run_start = None;
            p.run_qualified = false;
            return;
        }
        let start = *p.run_start.get_or_insert(t);
        if p.run_qualified || t - start < exposure {
            return;
        }
        p.run_qualified = true;
        let episode_start = p.episode_start.expect("within radius implies in range");
        self.qualifying.push(QualifyingContact { a: i, b: j, episode_start });
        for (src, dst) in [(i, j), (j, i)] {
            if self.agents[src].health == Health::Infectious
                && self.agents[dst].health == Health::Susceptible
                && self.world_rng.random_bool(self.scenario.infection.transmission_prob)
            {
                self.agents[dst].health = Health::Infectious;
                self.agents[dst].infected_at = Some(t);
                self.counters.infections += 1;
                self.trace.push(TraceEvent::Infect { at: t, source: src, target: dst });
            }
        }
    }

    fn close_session(&mut self, agent: usize, session: ContactSession, t: Timestamp) {
        let a = &mut self.agents[agent];
        let verdict = classify_contact(&session, &a.policy, &self.scenario.channel);
        if !verdict.is_significant() {
            return;
        }
        let peer = self.pid_owner[&session.peer_record.pid];
        a.log
            .append_entry(LogEntry::from_session(&session, &verdict, &a.policy, t))
            .expect("sessions close in time order");
        self.counters.contacts_logged += 1;
        self.trace.push(TraceEvent::Logged {
            at: t,
            agent,
            peer,
            dwell_s: verdict.dwell_s,
            policy_version: a.policy.version,
        });
    }

    fn rotate_pids(&mut self, t: Timestamp) {
        for id in 0..self.agents.len() {
            if !self.agents[id].is_active() {
                continue;
            }
            for s in self.agents[id].sessions.drain() {
                self.close_session(id, s, t);
            }
            let pid = Pid::random(&mut self.world_rng);
            self.pid_owner.insert(pid.clone(), id);
            self.agents[id].identity.rotate(t, pid).expect("rotation times increase");
            self.trace.push(TraceEvent::Rotate { at: t, agent: id });
        }
    }

    fn run_diagnoses(&mut self, t: Timestamp) {
        for id in 0..self.agents.len() {
            let a = &self.agents[id];
            if a.health == Health::Infectious
                && a.infected_at.is_some_and(|i| i + self.scenario.diagnosis_delay_s <= t)
            {
                self.diagnose(id, t);
            }
        }
    }

    fn diagnose(&mut self, id: usize, t: Timestamp) {
        for s in self.agents[id].sessions.drain() {
            self.close_session(id, s, t);
        }
        let a = &mut self.agents[id];
        a.log.prune(t);
        a.health = Health::Diagnosed;
        a.diagnosed_at = Some(t);
        self.counters.diagnoses += 1;

        let infectious_from = date_of(a.infected_at.expect("diagnosed agents were infected"));
        let pids = active_pids_in_window(&a.identity, day_start(infectious_from), t).expect("window ends now");
        let cert = issue_certificate(&self.lab, &pids, date_of(t), infectious_from).expect("at least one PID");
        let outgoing = build_notifications(&a.log, &pids, Some(&cert)).expect("certificate lists every own PID");

        self.trace.push(TraceEvent::Diagnose {
            at: t,
            agent: id,
            pids: pids.len(),
            notifications: outgoing.len(),
        });
        for (pad, n) in outgoing {
            self.counters.notifications_built += 1;
            self.genuine_sent.push((id, n.clone()));
            self.deliver(&pad, Provenance::Genuine { origin: id }, n, t);
        }
    }

    fn deliver(&mut self, pad: &Pad, from: Provenance, notification: Notification, t: Timestamp) {
        let to = self.pad_owner[pad];
        self.trace.push(TraceEvent::Deliver { at: t, to, from });
        self.mailboxes.push(pad, Envelope { from, notification });
    }

    fn poll_mailboxes(&mut self, t: Timestamp) {
        for r in 0..self.agents.len() {
            let mut inbox = std::mem::take(&mut self.agents[r].deferred);
            inbox.extend(self.mailboxes.drain(self.agents[r].pad()));
            for env in inbox {
                let agent = &self.agents[r];
                // Our own session with the sender is still open, so the
                // contact is not in the log yet.
                if agent.sessions.contains_peer(&env.notification.sender_pid) {
                    self.agents[r].deferred.push(env);
                    continue;
                }
                let verdict = verify_notification(&env.notification, &agent.log, &self.directory, &self.verifier);
                self.record_verdict(r, env.from, verdict.status, t);
            }
        }
    }

    fn record_verdict(&mut self, receiver: usize, from: Provenance, status: VerificationStatus, t: Timestamp) {
        let accepted = status.is_accepted();
        if accepted {
            self.counters.verdicts_accepted += 1;
        } else {
            self.counters.verdicts_rejected += 1;
        }
        *self.counters.by_status.entry(status.label()).or_default() += 1;
        match from {
            Provenance::Genuine { origin } if accepted => {
                self.accepted_pairs.insert((origin, receiver));
            }
            Provenance::Genuine { .. } => {}
            Provenance::Forged { .. } if accepted => self.counters.accepted_forgeries += 1,
            Provenance::Forged { .. } => self.counters.rejected_forgeries += 1,
        }
        self.trace.push(TraceEvent::Verdict { at: t, receiver, from, status });
    }

    /// Crafts `count` attack notifications of the given kind and delivers
    /// them now. They are verified on the next mailbox poll. Returns the
    /// number actually delivered: a PID swap needs a genuine notification
    /// to copy and delivers nothing before the first diagnosis.
    pub fn inject_forgeries(&mut self, kind: ForgeryKind, count: usize) -> usize {
        let t = self.now;
        let mut delivered = 0;
        for k in 0..count {
            let crafted = match kind {
                ForgeryKind::FakeContactClaim => Some(self.forge_fake_claim(t)),
                ForgeryKind::PidSwap => self.forge_pid_swap(k),
                ForgeryKind::BogusCertificate => Some(self.forge_bogus_certificate(t)),
            };
            let Some((attacker, pad, n)) = crafted else { break };
            self.counters.forgeries_injected += 1;
            self.deliver(&pad, Provenance::Forged { attacker, kind }, n, t);
            delivered += 1;
        }
        delivered
    }

    fn latest_certificate(&self) -> Option<CertificateOfInfection> {
        self.genuine_sent.last().and_then(|(_, n)| n.certificate.clone())
    }

    /// Random sender PID and random echoed fields shaped like real ones.
    fn forge_fake_claim(&mut self, t: Timestamp) -> (usize, Pad, Notification) {
        let n = self.agents.len();
        let attacker = self.attack_rng.random_range(0..n);
        let victim = self.attack_rng.random_range(0..n);
        let start = self.scenario.start_time;
        let echoed_time = self.attack_rng.random_range(start..=t.max(start));
        let notification = Notification {
            sender_pid: Pid::random(&mut self.attack_rng),
            echoed_time,
            echoed_location: self.location_label(victim, echoed_time),
            certificate: self.latest_certificate(),
        };
        (attacker, self.agents[victim].pad().clone(), notification)
    }

    /// Copies the `k`-th genuine notification and replaces the sender PID
    /// by the attacker's. Odd `k` aim at someone the attacker really logged,
    /// echoing that contact so the log match succeeds.
    fn forge_pid_swap(&mut self, k: usize) -> Option<(usize, Pad, Notification)> {
        if self.genuine_sent.is_empty() {
            return None;
        }
        let (origin, base) = self.genuine_sent[k % self.genuine_sent.len()].clone();
        let n = self.agents.len();
        if n < 2 {
            return None;
        }
        let candidates: Vec<usize> = (0..n).filter(|&a| a != origin && !self.agents[a].log.is_empty()).collect();
        if k % 2 == 1 {
            if let Some(&attacker) = candidates.choose(&mut self.attack_rng) {
                let entry = self.agents[attacker]
                    .log
                    .entries()
                    .choose(&mut self.attack_rng)
                    .expect("non-empty log")
                    .clone();
                let notification = Notification {
                    sender_pid: entry.own_record.pid,
                    echoed_time: entry.peer_record.local_time,
                    echoed_location: entry.peer_record.local_location,
                    certificate: base.certificate,
                };
                return Some((attacker, entry.peer_record.pad, notification));
            }
        }
        let attacker = loop {
            let a = self.attack_rng.random_range(0..n);
            if a != origin {
                break a;
            }
        };
        let victim = self.attack_rng.random_range(0..n);
        let notification = Notification {
            sender_pid: self.agents[attacker].pid().clone(),
            ..base
        };
        Some((attacker, self.agents[victim].pad().clone(), notification))
    }

    /// A certificate from a lab the directory has never heard of, sent for
    /// one of the attacker's real contacts when there is one.
    fn forge_bogus_certificate(&mut self, t: Timestamp) -> (usize, Pad, Notification) {
        let rogue = LabIdentity::generate(ROGUE_LAB_ID, &mut self.attack_rng).expect("constant lab id is valid");
        let n = self.agents.len();
        let with_log: Vec<usize> = (0..n).filter(|&a| !self.agents[a].log.is_empty()).collect();
        let (attacker, sender_pid, pad, echoed_time, echoed_location) = match with_log.choose(&mut self.attack_rng) {
            Some(&a) => {
                let e = self.agents[a].log.entries().choose(&mut self.attack_rng).expect("non-empty").clone();
                (a, e.own_record.pid, e.peer_record.pad, e.peer_record.local_time, e.peer_record.local_location)
            }
            None => {
                let a = self.attack_rng.random_range(0..n);
                let v = self.attack_rng.random_range(0..n);
                (a, self.agents[a].pid().clone(), self.agents[v].pad().clone(), t, self.location_label(v, t))
            }
        };
        let today = date_of(t);
        let cert = issue_certificate(&rogue, std::slice::from_ref(&sender_pid), today, today).expect("one PID");
        let notification = Notification {
            sender_pid,
            echoed_time,
            echoed_location,
            certificate: Some(cert),
        };
        (attacker, pad, notification)
    }

    /// Scores what the devices achieved against ground truth.
    pub fn metrics(&self) -> SimMetrics {
        let mut truth = BTreeSet::new();
        for qc in &self.qualifying {
            for (x, y) in [(qc.a, qc.b), (qc.b, qc.a)] {
                let a = &self.agents[x];
                if let (Some(infected), Some(_)) = (a.infected_at, a.diagnosed_at) {
                    if qc.episode_start >= day_start(date_of(infected)) {
                        truth.insert((x, y));
                    }
                }
            }
        }
        let mut m = self.counters.clone();
        m.true_exposures = truth.len();
        m.notified_true = self.accepted_pairs.intersection(&truth).count();
        m.notified_false = self.accepted_pairs.difference(&truth).count();
        m.missed = truth.difference(&self.accepted_pairs).count();
        m.pending = self.mailboxes.total_pending() + self.agents.iter().map(|a| a.deferred.len()).sum::<usize>();
        m
    }
}

/// Outcome of a full run.
pub struct SimRun {
    pub metrics: SimMetrics,
    pub trace: String,
    pub simulation: Simulation,
}

/// Runs the scenario for its full duration, then closes all sessions and
/// drains every mailbox before scoring.
pub fn run_scenario(scenario: Scenario) -> Result<SimRun, InvalidScenario> {
    let mut sim = Simulation::new(scenario)?;
    sim.step_world(sim.scenario.duration_s);
    sim.finish();
    Ok(SimRun {
        metrics: sim.metrics(),
        trace: sim.trace_text(),
        simulation: sim,
    })
}
