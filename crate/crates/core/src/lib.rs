//! Contact tracing without a central server.
//!
//! Devices exchange pseudonymous information records, keep a private log of
//! significant contacts, and on diagnosis post lab-signed certificates of
//! infection to the pseudo-addresses of their past contacts. Receivers
//! accept a notification only when it matches their own log and the
//! certificate checks out.

pub mod bizlog;
pub mod certificates;
pub mod codec;
pub mod contactlog;
pub mod encounter;
pub mod error;
pub mod identity;
pub mod notify;
pub mod registry;
pub mod sim;

pub use certificates::{CertificateOfInfection, CertificateStatus, LabDirectory, LabIdentity};
pub use contactlog::{ContactLog, LogEntry};
pub use encounter::{ChannelModel, InformationRecord, SignificancePolicy};
pub use error::ParseError;
pub use identity::{Pad, Pid};
pub use notify::{DeploymentMode, Notification, VerificationStatus};

/// Seconds since the Unix epoch, as seen by a device clock.
pub type Timestamp = i64;
