//! `ctrace`: operator tools for every role in the protocol.
//!
//! Exit codes: 0 success, 1 protocol-level rejection, 2 usage or input
//! error. Machine-readable results go to stdout, diagnostics to stderr.

mod bizlog;
mod cert;
mod log;
mod notify;
mod pid;
mod registry;
mod sim;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctrace_core::identity::{Pad, Pid};
use ctrace_core::notify::DeploymentMode;
use ctrace_core::Timestamp;

#[derive(Parser)]
#[command(name = "ctrace", version, about = "Decentralised contact tracing tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate pseudo-IDs.
    #[command(subcommand)]
    Pid(PidCmd),
    /// Run a simulation scenario and print its metrics.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        /// Also write the event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Lab keys and certificates of infection.
    #[command(subcommand)]
    Cert(CertCmd),
    /// Build and verify exposure notifications.
    #[command(subcommand)]
    Notify(NotifyCmd),
    /// Notified-PID registry service and its clients.
    #[command(subcommand)]
    Registry(RegistryCmd),
    /// Hash-chained business visitor logs.
    #[command(subcommand)]
    Bizlog(BizlogCmd),
    /// Inspect and maintain a device contact log.
    #[command(subcommand)]
    Log(LogCmd),
}

#[derive(Subcommand)]
enum PidCmd {
    /// Print a random PID; with --seed the output is reproducible.
    Random {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the PID committed to by personal data and a secret phrase.
    Trusted {
        #[arg(long)]
        name: String,
        #[arg(long)]
        phrase: String,
        /// Write the publishable commitment line (without the phrase) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CertCmd {
    /// Create a lab signing key.
    Keygen {
        #[arg(long)]
        lab_id: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        key_out: PathBuf,
        /// Append the lab's public key line to this directory file.
        #[arg(long)]
        directory: Option<PathBuf>,
    },
    /// Sign a certificate for one or more PIDs.
    Issue {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "pid", required = true)]
        pids: Vec<Pid>,
        #[arg(long)]
        test_date: NaiveDate,
        #[arg(long)]
        infectious_from: NaiveDate,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a certificate against a lab directory.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        directory: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Required,
    Optional,
}

impl From<Mode> for DeploymentMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Required => DeploymentMode::CertificateRequired,
            Mode::Optional => DeploymentMode::CertificateOptional,
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct NotificationSource {
    /// A file holding one or more notifications.
    #[arg(long)]
    notification: Option<PathBuf>,
    /// Poll the mailbox for --pad in this directory (consumes it).
    #[arg(long, requires = "pad")]
    mailbox_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum NotifyCmd {
    /// Notify every contact logged under the given own PIDs.
    Build {
        #[arg(long)]
        log: PathBuf,
        #[arg(long = "own-pid", required = true)]
        own_pids: Vec<Pid>,
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long)]
        mailbox_dir: PathBuf,
    },
    /// Run the receiver-side checks and print one verdict per notification.
    Verify {
        #[command(flatten)]
        source: NotificationSource,
        #[arg(long)]
        pad: Option<Pad>,
        #[arg(long)]
        log: PathBuf,
        /// Lab directory; may be omitted only in optional mode.
        #[arg(long)]
        directory: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "required")]
        mode: Mode,
        #[arg(long, default_value_t = ctrace_core::contactlog::DEFAULT_TIME_TOLERANCE_S)]
        time_tolerance_s: i64,
        #[arg(long, default_value_t = 0)]
        post_test_margin_days: u32,
    },
}

#[derive(Subcommand)]
enum RegistryCmd {
    /// Serve until killed. Prints `listening|<addr>` once bound.
    Serve {
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        directory: PathBuf,
        /// Append-only persistence file, replayed on start.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Is this PID named in an ingested certificate?
    Query {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        pid: Pid,
    },
    /// Claim test priority for contact with a notified PID.
    Claim {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        contact_pid: Pid,
        #[arg(long)]
        claimant_pid: Pid,
        #[arg(long)]
        name: String,
        #[arg(long)]
        phrase: String,
    },
    /// Submit a certificate.
    Ingest {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        cert: PathBuf,
    },
}

#[derive(Args)]
struct ChainFiles {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    head: PathBuf,
    #[arg(long, default_value = "business")]
    business_id: String,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct NotifiedSource {
    /// Registry persistence file.
    #[arg(long)]
    notified: Option<PathBuf>,
    /// Live registry address.
    #[arg(long)]
    registry: Option<String>,
}

#[derive(Subcommand)]
enum BizlogCmd {
    /// Record a visit; creates the files if missing.
    Append {
        #[command(flatten)]
        files: ChainFiles,
        #[arg(long)]
        pid: Pid,
        #[arg(long)]
        at: Timestamp,
    },
    /// Recompute the chain.
    Verify {
        #[command(flatten)]
        files: ChainFiles,
    },
    /// Did this PID visit in the window, and is it certified sick?
    Evidence {
        #[command(flatten)]
        files: ChainFiles,
        #[arg(long)]
        pid: Pid,
        #[arg(long)]
        from: Timestamp,
        #[arg(long)]
        to: Timestamp,
        #[command(flatten)]
        source: NotifiedSource,
    },
}

#[derive(Subcommand)]
enum LogCmd {
    Show {
        #[arg(long)]
        log: PathBuf,
    },
    /// Drop entries older than the retention period, in place.
    Prune {
        #[arg(long)]
        log: PathBuf,
        /// Defaults to the system clock.
        #[arg(long)]
        now: Option<Timestamp>,
        #[arg(long, default_value_t = ctrace_core::contactlog::DEFAULT_RETENTION_DAYS)]
        retention_days: u32,
    },
    Stats {
        #[arg(long)]
        log: PathBuf,
    },
}

/// A failure that maps to exit code 2.
#[derive(Debug)]
pub struct InputError(String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

pub type CmdResult = Result<ExitCode, InputError>;

pub fn fail(msg: impl Into<String>) -> InputError {
    InputError(msg.into())
}

pub fn read_file(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, text: &str) -> Result<(), InputError> {
    std::fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

pub fn verdict(accepted: bool) -> ExitCode {
    if accepted {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pid(PidCmd::Random { seed }) => pid::random(seed),
        Command::Pid(PidCmd::Trusted { name, phrase, out }) => pid::trusted(&name, &phrase, out.as_deref()),
        Command::Sim { scenario, trace } => sim::run(&scenario, trace.as_deref()),
        Command::Cert(CertCmd::Keygen { lab_id, seed, key_out, directory }) => {
            cert::keygen(&lab_id, seed, &key_out, directory.as_deref())
        }
        Command::Cert(CertCmd::Issue { key, pids, test_date, infectious_from, out }) => {
            cert::issue(&key, &pids, test_date, infectious_from, out.as_deref())
        }
        Command::Cert(CertCmd::Verify { cert, directory }) => cert::verify(&cert, &directory),
        Command::Notify(NotifyCmd::Build { log, own_pids, cert, mailbox_dir }) => {
            notify::build(&log, &own_pids, cert.as_deref(), &mailbox_dir)
        }
        Command::Notify(NotifyCmd::Verify {
            source,
            pad,
            log,
            directory,
            mode,
            time_tolerance_s,
            post_test_margin_days,
        }) => notify::verify(
            notify::Source::from_args(source.notification, source.mailbox_dir, pad),
            &log,
            directory.as_deref(),
            mode.into(),
            time_tolerance_s,
            post_test_margin_days,
        ),
        Command::Registry(RegistryCmd::Serve { port, bind, directory, store }) => {
            registry::serve(&bind, port, &directory, store.as_deref())
        }
        Command::Registry(RegistryCmd::Query { addr, pid }) => registry::query(&addr, pid),
        Command::Registry(RegistryCmd::Claim { addr, contact_pid, claimant_pid, name, phrase }) => {
            registry::claim(&addr, contact_pid, claimant_pid, name, phrase)
        }
        Command::Registry(RegistryCmd::Ingest { addr, cert }) => registry::ingest(&addr, &cert),
        Command::Bizlog(BizlogCmd::Append { files, pid, at }) => bizlog::append(&files, pid, at),
        Command::Bizlog(BizlogCmd::Verify { files }) => bizlog::verify(&files),
        Command::Bizlog(BizlogCmd::Evidence { files, pid, from, to, source }) => {
            bizlog::evidence(&files, &pid, from, to, source.notified.as_deref(), source.registry.as_deref())
        }
        Command::Log(LogCmd::Show { log }) => log::show(&log),
        Command::Log(LogCmd::Prune { log, now, retention_days }) => log::prune(&log, now, retention_days),
        Command::Log(LogCmd::Stats { log }) => log::stats(&log),
    };
    result.unwrap_or_else(|InputError(msg)| {
        eprintln!("ctrace: {msg}");
        ExitCode::from(2)
    })
}
