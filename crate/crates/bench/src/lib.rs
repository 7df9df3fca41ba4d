//! Fixtures shared by the benchmarks.

use ctrace_core::bizlog::VisitorLog;
use ctrace_core::certificates::{date_of, issue_certificate, CertificateOfInfection, LabDirectory, LabIdentity};
use ctrace_core::encounter::{distance_to_rssi, ChannelModel, ContactSession, InformationRecord, RssiSample};
use ctrace_core::identity::{generate_random_pid, Pad, Pid};
use ctrace_core::sim::Scenario;

fn record(seed: u64, at: i64) -> InformationRecord {
    let pid = generate_random_pid(seed);
    let pad = Pad::for_pid(&pid, "bench.local").unwrap();
    InformationRecord::new(pid, pad, at, "bench").unwrap()
}

/// A session of `n` beacons 10 s apart, drifting between 0.5 m and 5 m.
pub fn session(n: usize, model: &ChannelModel) -> ContactSession {
    let samples: Vec<RssiSample> = (0..n)
        .map(|i| {
            let d = 0.5 + 4.5 * ((i as f64) * 0.07).sin().abs();
            RssiSample::new(10 * i as i64, distance_to_rssi(d, model, 0.0, false).unwrap()).unwrap()
        })
        .collect();
    ContactSession {
        own_record: record(1, 0),
        peer_record: record(2, 0),
        started: 0,
        last_seen: samples.last().map_or(0, |s| s.at),
        samples,
    }
}

pub fn signed_certificate(n_pids: usize) -> (CertificateOfInfection, LabDirectory) {
    let lab = LabIdentity::from_seed("bench-lab", [7; 32]).unwrap();
    let dir = LabDirectory::new().with_lab(&lab).unwrap();
    let pids: Vec<Pid> = (0..n_pids as u64).map(generate_random_pid).collect();
    let cert = issue_certificate(&lab, &pids, date_of(1_586_000_000), date_of(1_585_000_000)).unwrap();
    (cert, dir)
}

pub fn visitor_log(n: usize) -> VisitorLog {
    let mut log = VisitorLog::new("bench-shop");
    for i in 0..n {
        log.append_visit(generate_random_pid(i as u64), 60 * i as i64).unwrap();
    }
    log
}

/// Twenty agents in a 30 m square for one hour.
pub fn small_scenario(seed: u64) -> Scenario {
    Scenario {
        n_agents: 20,
        world_width_m: 30.0,
        world_height_m: 30.0,
        initial_infectious: 2,
        duration_s: 3600,
        diagnosis_delay_s: 1800,
        channel: ChannelModel {
            path_loss_exponent: 3.0,
            shadowing_sigma_db: 4.0,
            ..ChannelModel::default()
        },
        rng_seed: seed,
        ..Scenario::default()
    }
}
