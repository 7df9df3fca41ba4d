use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ctrace_core::certificates::LabDirectory;
use ctrace_core::identity::{Pad, Pid};
use ctrace_core::notify::{
    build_notifications, parse_notifications, verify_notification, DeploymentMode, FileMailboxes, MailboxStore,
    VerifierConfig,
};

use crate::cert::{load_certificate, load_directory};
use crate::log::load_log;
use crate::{fail, read_file, verdict, CmdResult};

pub enum Source {
    File(PathBuf),
    Mailbox(PathBuf, Pad),
}

impl Source {
    /// clap guarantees exactly one source, and a PAD with a mailbox.
    pub fn from_args(notification: Option<PathBuf>, mailbox_dir: Option<PathBuf>, pad: Option<Pad>) -> Self {
        match (notification, mailbox_dir, pad) {
            (Some(file), _, _) => Source::File(file),
            (None, Some(dir), Some(pad)) => Source::Mailbox(dir, pad),
            _ => unreachable!("argument groups enforce a source"),
        }
    }
}

pub fn build(log: &Path, own_pids: &[Pid], cert: Option<&Path>, mailbox_dir: &Path) -> CmdResult {
    let log = load_log(log)?;
    let cert = cert.map(load_certificate).transpose()?;
    let outgoing = build_notifications(&log, own_pids, cert.as_ref())?;
    let boxes = FileMailboxes::open(mailbox_dir)?;
    for (pad, n) in &outgoing {
        boxes.deliver(pad.as_str(), n)?;
        println!("sent|{pad}");
    }
    eprintln!("delivered {} notification(s)", outgoing.len());
    Ok(ExitCode::SUCCESS)
}

pub fn verify(
    source: Source,
    log: &Path,
    directory: Option<&Path>,
    mode: DeploymentMode,
    time_tolerance_s: i64,
    post_test_margin_days: u32,
) -> CmdResult {
    let log = load_log(log)?;
    let directory = match (directory, mode) {
        (Some(path), _) => load_directory(path)?,
        (None, DeploymentMode::CertificateOptional) => LabDirectory::new(),
        (None, DeploymentMode::CertificateRequired) => return Err(fail("--directory is required in required mode")),
    };
    let notifications = match source {
        Source::File(path) => {
            parse_notifications(&read_file(&path)?).map_err(|e| fail(format!("{}: {e}", path.display())))?
        }
        Source::Mailbox(dir, pad) => FileMailboxes::open(dir)?.poll(pad.as_str())?,
    };
    if notifications.is_empty() {
        eprintln!("no notifications");
        return Ok(verdict(false));
    }
    let config = VerifierConfig {
        mode,
        time_tolerance_s,
        post_test_margin_days,
    };
    let mut all_accepted = true;
    for n in &notifications {
        let v = verify_notification(n, &log, &directory, &config);
        println!("{}", v.status.label());
        if let Some(entry) = &v.matched_entry {
            println!("{}", entry.to_line());
        }
        all_accepted &= v.status.is_accepted();
    }
    Ok(verdict(all_accepted))
}
