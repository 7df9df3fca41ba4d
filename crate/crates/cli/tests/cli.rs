use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use ctrace_core::certificates::CertificateOfInfection;
use ctrace_core::contactlog::ContactLog;
use ctrace_core::identity::{Pid, PublishedCommitment};
use tempfile::TempDir;

const ALICE: &str = "a11ce00000000000000000000000000a";
const BOB_PAD: &str = "bob@phone.example";
const CAROL_PAD: &str = "carol@phone.example";

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn ctrace<I, S>(args: I) -> Out
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_ctrace")).args(args).output().expect("spawn ctrace");
    Out {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Lab key, directory and a certificate for Alice's PID.
struct Lab {
    dir: TempDir,
}

impl Lab {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let lab = Lab { dir };
        let o = ctrace([
            "cert", "keygen", "--lab-id", "lab-a", "--seed", "9",
            "--key-out", p(&lab.key()), "--directory", p(&lab.directory()),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        let o = ctrace([
            "cert", "issue", "--key", p(&lab.key()), "--pid", ALICE,
            "--test-date", "2020-04-03", "--infectious-from", "2020-03-30", "--out", p(&lab.cert()),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        lab
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn key(&self) -> PathBuf {
        self.path("lab.key")
    }

    fn directory(&self) -> PathBuf {
        self.path("labs.dir")
    }

    fn cert(&self) -> PathBuf {
        self.path("alice.cert")
    }
}

#[test]
fn trusted_pid_matches_the_hash_commitment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("commitment");
    let o = ctrace(["pid", "trusted", "--name", "Ada Lovelace", "--phrase", "tea at noon", "--out", p(&out)]);
    assert_eq!(o.code, 0);
    assert_eq!(o.stdout, "a0d504649ca515521dea2a88c422a834\n");
    let written = std::fs::read_to_string(&out).unwrap();
    assert!(!written.contains("tea"));
    let c = PublishedCommitment::parse_line(written.trim_end()).unwrap();
    assert_eq!((c.pid.as_str(), c.personal_data.as_str()), ("a0d504649ca515521dea2a88c422a834", "Ada Lovelace"));
}

#[test]
fn seeded_random_pid_is_reproducible() {
    let a = ctrace(["pid", "random", "--seed", "42"]);
    let b = ctrace(["pid", "random", "--seed", "42"]);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.trim().parse::<Pid>().is_ok());
    assert_ne!(a.stdout, ctrace(["pid", "random", "--seed", "43"]).stdout);
}

#[test]
fn missing_flags_are_usage_errors() {
    assert_eq!(ctrace(["pid", "trusted", "--name", "X"]).code, 2);
    assert_eq!(ctrace(["cert", "verify", "--cert", "x"]).code, 2);
    assert_eq!(ctrace(["notify", "verify", "--log", "x"]).code, 2);
    assert_eq!(ctrace(["frobnicate"]).code, 2);
}

#[test]
fn sim_interop_fixture_shows_the_asymmetry() {
    let o = ctrace(["sim", "--scenario", p(&scenario("interop.scenario"))]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert!(lines.iter().all(|l| l.starts_with("metric|")));
    assert!(lines.contains(&"metric|notifications_built|1"));
    assert!(lines.contains(&"metric|contacts_logged|1"));
    assert!(lines.contains(&"metric|status.REJECTED-NO-MATCHING-CONTACT|1"));
    assert!(!o.stdout.contains("status.ACCEPTED"));
}

#[test]
fn sim_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (t1, t2) = (dir.path().join("t1"), dir.path().join("t2"));
    let s = scenario("reference.scenario");
    let a = ctrace(["sim", "--scenario", p(&s), "--trace", p(&t1)]);
    let b = ctrace(["sim", "--scenario", p(&s), "--trace", p(&t2)]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());
    assert!(std::fs::read_to_string(&t1).unwrap().lines().all(|l| l.starts_with("event|")));
}

#[test]
fn sim_rejects_missing_or_bad_scenarios() {
    assert_eq!(ctrace(["sim", "--scenario", "/nonexistent/x.scenario"]).code, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scenario");
    std::fs::write(&bad, "n_agents = 2\nwarp_speed = 9\n").unwrap();
    let o = ctrace(["sim", "--scenario", p(&bad)]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("warp_speed"));
}

#[test]
fn certificate_round_trip_and_tamper() {
    let lab = Lab::new();
    let text = std::fs::read_to_string(lab.cert()).unwrap();
    assert!(CertificateOfInfection::parse_text(&text).is_ok());

    let o = ctrace(["cert", "verify", "--cert", p(&lab.cert()), "--directory", p(&lab.directory())]);
    assert_eq!((o.code, o.stdout.as_str()), (0, "VERIFIED\n"));

    let edited = lab.path("edited.cert");
    std::fs::write(&edited, text.replacen(ALICE, "a11ce00000000000000000000000000b", 1)).unwrap();
    let o = ctrace(["cert", "verify", "--cert", p(&edited), "--directory", p(&lab.directory())]);
    assert_eq!((o.code, o.stdout.as_str()), (1, "BAD-SIGNATURE\n"));

    let empty = lab.path("empty.dir");
    std::fs::write(&empty, "").unwrap();
    let o = ctrace(["cert", "verify", "--cert", p(&lab.cert()), "--directory", p(&empty)]);
    assert_eq!((o.code, o.stdout.as_str()), (1, "UNKNOWN-LAB\n"));

    let junk = lab.path("junk.cert");
    std::fs::write(&junk, "hello\n").unwrap();
    assert_eq!(ctrace(["cert", "verify", "--cert", p(&junk), "--directory", p(&lab.directory())]).code, 2);
}

#[test]
fn issue_to_stdout_is_parseable() {
    let lab = Lab::new();
    let o = ctrace([
        "cert", "issue", "--key", p(&lab.key()), "--pid", ALICE, "--pid", "b0b0000000000000000000000000000b",
        "--test-date", "2020-04-03", "--infectious-from", "2020-03-30",
    ]);
    assert_eq!(o.code, 0);
    assert_eq!(CertificateOfInfection::parse_text(&o.stdout).unwrap().pids.len(), 2);
    let o = ctrace([
        "cert", "issue", "--key", p(&lab.key()), "--pid", ALICE,
        "--test-date", "2020-03-01", "--infectious-from", "2020-03-30",
    ]);
    assert_eq!(o.code, 2);
}

#[test]
fn notification_flow_end_to_end() {
    let lab = Lab::new();
    let mail = lab.path("mail");
    let o = ctrace([
        "notify", "build", "--log", p(&fixture("alice.log")), "--own-pid", ALICE,
        "--cert", p(&lab.cert()), "--mailbox-dir", p(&mail),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.stdout, format!("sent|{BOB_PAD}\nsent|{CAROL_PAD}\n"));

    let o = ctrace([
        "notify", "verify", "--mailbox-dir", p(&mail), "--pad", BOB_PAD,
        "--log", p(&fixture("bob.log")), "--directory", p(&lab.directory()),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let mut lines = o.stdout.lines();
    assert_eq!(lines.next(), Some("ACCEPTED"));
    let entry = lines.next().unwrap();
    assert_eq!(ContactLog::parse(entry, 21).unwrap().len(), 1);
    assert_eq!(entry, std::fs::read_to_string(fixture("bob.log")).unwrap().trim_end());

    // The mailbox was consumed.
    let again = ctrace([
        "notify", "verify", "--mailbox-dir", p(&mail), "--pad", BOB_PAD,
        "--log", p(&fixture("bob.log")), "--directory", p(&lab.directory()),
    ]);
    assert_eq!((again.code, again.stdout.as_str()), (1, ""));
}

fn alice_to_bob(lab: &Lab, with_cert: bool) -> String {
    let mail = lab.path(if with_cert { "mail-c" } else { "mail-n" });
    let mut args = vec![
        "notify".to_owned(), "build".into(), "--log".into(), p(&fixture("alice.log")).into(),
        "--own-pid".into(), ALICE.into(), "--mailbox-dir".into(), p(&mail).into(),
    ];
    if with_cert {
        args.extend(["--cert".to_owned(), p(&lab.cert()).to_owned()]);
    }
    assert_eq!(ctrace(&args).code, 0);
    let file = std::fs::read_dir(&mail)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|f| f.file_name().unwrap().to_str().unwrap().starts_with("bob"))
        .unwrap();
    std::fs::read_to_string(file).unwrap()
}

#[test]
fn tampered_location_is_rejected() {
    let lab = Lab::new();
    let text = alice_to_bob(&lab, true);
    assert!(text.contains("|bus-12\n"));
    let forged = lab.path("forged.notif");
    std::fs::write(&forged, text.replacen("|bus-12\n", "|bus-13\n", 1)).unwrap();
    let o = ctrace([
        "notify", "verify", "--notification", p(&forged),
        "--log", p(&fixture("bob.log")), "--directory", p(&lab.directory()),
    ]);
    assert_eq!((o.code, o.stdout.as_str()), (1, "REJECTED-NO-MATCHING-CONTACT\n"));
}

#[test]
fn uncertified_notifications_depend_on_mode() {
    let lab = Lab::new();
    let note = lab.path("plain.notif");
    std::fs::write(&note, alice_to_bob(&lab, false)).unwrap();

    let o = ctrace([
        "notify", "verify", "--notification", p(&note), "--log", p(&fixture("bob.log")), "--mode", "optional",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.stdout.lines().next(), Some("ACCEPTED-UNCERTIFIED"));

    let o = ctrace([
        "notify", "verify", "--notification", p(&note), "--log", p(&fixture("bob.log")),
        "--directory", p(&lab.directory()),
    ]);
    assert_eq!((o.code, o.stdout.as_str()), (1, "REJECTED-BAD-SIGNATURE\n"));

    let o = ctrace(["notify", "verify", "--notification", p(&note), "--log", p(&fixture("bob.log"))]);
    assert_eq!(o.code, 2);
}

#[test]
fn building_with_a_certificate_that_omits_the_pid_fails() {
    let lab = Lab::new();
    let other = lab.path("other.cert");
    let o = ctrace([
        "cert", "issue", "--key", p(&lab.key()), "--pid", "0000000000000000000000000000beef",
        "--test-date", "2020-04-03", "--infectious-from", "2020-03-30", "--out", p(&other),
    ]);
    assert_eq!(o.code, 0);
    let o = ctrace([
        "notify", "build", "--log", p(&fixture("alice.log")), "--own-pid", ALICE,
        "--cert", p(&other), "--mailbox-dir", p(&lab.path("m")),
    ]);
    assert_eq!(o.code, 2);
}

struct Server(Child, String);

impl Server {
    fn start(lab: &Lab, store: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_ctrace"))
            .args(["registry", "serve", "--port", "0", "--directory", p(&lab.directory()), "--store", p(store)])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening|").expect("listening line").to_owned();
        Server(child, addr)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn registry_over_the_wire() {
    let lab = Lab::new();
    // A trusted PID for the person claiming priority.
    let claimant = ctrace(["pid", "trusted", "--name", "Bob Builder", "--phrase", "blue door"]).stdout;
    let claimant = claimant.trim();
    let store = lab.path("registry.store");
    {
        let srv = Server::start(&lab, &store);
        let a = srv.1.as_str();
        let o = ctrace(["registry", "ingest", "--addr", a, "--cert", p(&lab.cert())]);
        assert_eq!((o.code, o.stdout.as_str()), (0, "OK\n"));
        let o = ctrace(["registry", "query", "--addr", a, "--pid", ALICE]);
        assert_eq!((o.code, o.stdout.as_str()), (0, "YES\n"));
        let o = ctrace(["registry", "query", "--addr", a, "--pid", "0000000000000000000000000000beef"]);
        assert_eq!((o.code, o.stdout.as_str()), (1, "NO\n"));
        let claim = |phrase: &str| {
            ctrace([
                "registry", "claim", "--addr", a, "--contact-pid", ALICE, "--claimant-pid", claimant,
                "--name", "Bob Builder", "--phrase", phrase,
            ])
        };
        let o = claim("blue door");
        assert_eq!((o.code, o.stdout.as_str()), (0, "CONFIRMED\n"));
        let o = claim("red door");
        assert_eq!((o.code, o.stdout.as_str()), (1, "OWNERSHIP-FAILED\n"));

        let edited = lab.path("edited.cert");
        let text = std::fs::read_to_string(lab.cert()).unwrap();
        std::fs::write(&edited, text.replacen("2020-04-03", "2020-04-02", 1)).unwrap();
        let o = ctrace(["registry", "ingest", "--addr", a, "--cert", p(&edited)]);
        assert_eq!((o.code, o.stdout.as_str()), (1, "REJECTED\n"));
    }
    let srv = Server::start(&lab, &store);
    let o = ctrace(["registry", "query", "--addr", &srv.1, "--pid", ALICE]);
    assert_eq!(o.stdout, "YES\n", "store replay lost the ingest");
}

#[test]
fn registry_connection_failure_is_exit_2() {
    let free = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let o = ctrace(["registry", "query", "--addr", &free.to_string(), "--pid", ALICE]);
    assert_eq!(o.code, 2);
}

#[test]
fn business_log_tamper_and_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("visits.chain");
    let head = dir.path().join("visits.head");
    let files = |extra: &[&str]| {
        let mut v = vec!["--chain".to_owned(), p(&chain).to_owned(), "--head".into(), p(&head).to_owned()];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let visitors = [ALICE, "b0b0000000000000000000000000000b", "c0ffee000000000000000000000000cc"];
    for (i, pid) in visitors.iter().enumerate() {
        let at = (1000 + 60 * i).to_string();
        let mut args = vec!["bizlog".to_owned(), "append".into()];
        args.extend(files(&["--pid", pid, "--at", &at]));
        let o = ctrace(&args);
        assert_eq!(o.code, 0, "{}", o.stderr);
        assert!(o.stdout.starts_with(&format!("visit|{}|{at}|{pid}\nhash|", i + 1)));
    }
    let verify = || {
        let mut args = vec!["bizlog".to_owned(), "verify".into()];
        args.extend(files(&[]));
        ctrace(&args)
    };
    let o = verify();
    assert_eq!((o.code, o.stdout.as_str()), (0, "INTACT\n"));

    let notified = dir.path().join("notified");
    std::fs::write(&notified, format!("notified|{ALICE}|lab-a|2020-04-03\n")).unwrap();
    let evidence = |pid: &str| {
        let mut args = vec!["bizlog".to_owned(), "evidence".into()];
        args.extend(files(&["--pid", pid, "--from", "0", "--to", "5000", "--notified", p(&notified)]));
        ctrace(&args)
    };
    let o = evidence(ALICE);
    assert_eq!((o.code, o.stdout.as_str()), (0, "VISIT-AND-CERTIFIED\n"));
    let o = evidence(visitors[1]);
    assert_eq!((o.code, o.stdout.as_str()), (1, "NOT-CERTIFIED-SICK\n"));
    let o = evidence("0000000000000000000000000000beef");
    assert_eq!((o.code, o.stdout.as_str()), (1, "NO-VISIT-RECORDED\n"));

    let mut late = vec!["bizlog".to_owned(), "append".into()];
    late.extend(files(&["--pid", ALICE, "--at", "10"]));
    assert_eq!(ctrace(&late).code, 2);

    let text = std::fs::read_to_string(&chain).unwrap();
    std::fs::write(&chain, text.replacen(visitors[1], "b0b0000000000000000000000000000c", 1)).unwrap();
    let o = verify();
    assert_eq!((o.code, o.stdout.as_str()), (1, "TAMPERED-AT 2\n"));

    std::fs::write(&chain, "visit|oops\n").unwrap();
    assert_eq!(verify().code, 2);
}

#[test]
fn log_stats_match_the_hand_tally() {
    let o = ctrace(["log", "stats", "--log", p(&fixture("history.log"))]);
    assert_eq!(o.code, 0);
    assert_eq!(
        o.stdout,
        "stat|entries|5\n\
         stat|distinct_peers|3\n\
         stat|location|cafe%20central|2\n\
         stat|location|home%2C%20kitchen|1\n\
         stat|location|office|2\n"
    );
}

#[test]
fn log_prune_drops_only_stale_entries() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("history.log");
    std::fs::copy(fixture("history.log"), &log).unwrap();
    let original: Vec<String> = std::fs::read_to_string(&log).unwrap().lines().map(str::to_owned).collect();
    // 31 days after the first entry; the third entry sits exactly on the cutoff.
    let prune = || ctrace(["log", "prune", "--log", p(&log), "--now", "1588406400", "--retention-days", "21"]);
    assert_eq!(prune().code, 0);
    let kept = std::fs::read_to_string(&log).unwrap();
    assert_eq!(kept.lines().collect::<Vec<_>>(), original[2..].iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(prune().code, 0);
    assert_eq!(std::fs::read_to_string(&log).unwrap(), kept);

    assert_eq!(ctrace(["log", "prune", "--log", p(&log), "--retention-days", "40"]).code, 2);
}

#[test]
fn log_show_round_trips() {
    let o = ctrace(["log", "show", "--log", p(&fixture("empty.log"))]);
    assert_eq!((o.code, o.stdout.as_str()), (0, ""));
    let o = ctrace(["log", "show", "--log", p(&fixture("history.log"))]);
    assert_eq!(o.code, 0);
    assert_eq!(ContactLog::parse(&o.stdout, 21).unwrap().len(), 5);
    assert_eq!(o.stdout, std::fs::read_to_string(fixture("history.log")).unwrap());
    assert_eq!(ctrace(["log", "show", "--log", p(&fixture("garbage.log"))]).code, 2);
    assert_eq!(ctrace(["log", "stats", "--log", "/nonexistent"]).code, 2);
}
