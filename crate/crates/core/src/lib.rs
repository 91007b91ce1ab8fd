//! RSSI-based indoor localization.
//!
//! Three estimators share one set of domain types:
//!
//! - [`trilat`]: model-based. RSSI streams are Kalman-smoothed, converted to
//!   ranges through a fitted log-distance [`pathloss`] model and solved as a
//!   linearized multilateration least-squares problem.
//! - [`fingerprint`]: survey-based. A [`fingerprint::FingerprintDatabase`] of
//!   per-anchor RSSI statistics is matched with k-nearest-neighbour averaging
//!   or a Gaussian Naive Bayes posterior.
//!
//! [`synth`] simulates rooms, anchors and shadowing so that everything can be
//! exercised without radios, [`ingest`] reads and smooths raw scan logs, and
//! [`eval`] turns per-point positional errors into summary statistics and
//! empirical CDFs.

pub mod eval;
pub mod fingerprint;
pub mod ingest;
pub mod numfmt;
pub mod pathloss;
pub mod synth;
pub mod trilat;
pub mod types;

pub use types::{Anchor, AnchorId, AnchorSet, CoreError, LabeledScan, Position, Rssi, ScanVector};
