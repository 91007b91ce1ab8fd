//! Survey-based localization.
//!
//! A [`FingerprintDatabase`] stores, for every surveyed position, the mean and
//! variance of each anchor's RSSI. Unknown scans are matched against it with
//! [`knn_locate`] or [`bayes_locate`].
//!
//! Anchors missing from either the scan or a fingerprint are skipped: every
//! comparison runs over the anchors both sides share.

mod bayes;
mod knn;
mod store;

pub use bayes::{bayes_locate, bayes_posteriors, BayesPosteriors, VARIANCE_FLOOR_DB2};
pub use knn::{knn_locate, rssi_distance, KnnConfig};
pub use store::{read_database, write_database, DB_HEADER};

use thiserror::Error;

use crate::types::{AnchorId, AnchorSet, CoreError, Position, ScanVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FingerprintError {
    #[error("survey at {0} has no scans")]
    EmptySurvey(Position),
    #[error("position {0} is surveyed more than once")]
    DuplicatePosition(Position),
    #[error("database needs at least one fingerprint")]
    EmptyDatabase,
    #[error("fingerprint at {0} has no anchor entries")]
    EmptyFingerprint(Position),
    #[error("scan and fingerprint share no anchors")]
    NoCommonAnchors,
    #[error("only {available} fingerprints share an anchor with the scan, need k = {k}")]
    InsufficientMatches { k: usize, available: usize },
    #[error("k must be >= 1")]
    InvalidK,
    #[error("invalid anchor statistics: {0}")]
    InvalidStats(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for FingerprintError {
    fn from(e: std::io::Error) -> Self {
        FingerprintError::Io(e.to_string())
    }
}

/// Gaussian summary of one anchor's readings at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorStats {
    mean: f64,
    variance: f64,
    sample_count: u64,
}

impl AnchorStats {
    pub fn new(mean: f64, variance: f64, sample_count: u64) -> Result<Self, FingerprintError> {
        if !mean.is_finite() {
            return Err(FingerprintError::InvalidStats(format!("mean {mean}")));
        }
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(FingerprintError::InvalidStats(format!("variance {variance}")));
        }
        if sample_count == 0 {
            return Err(FingerprintError::InvalidStats("sample count 0".into()));
        }
        Ok(Self { mean, variance, sample_count })
    }

    /// Population statistics of `values`; `None` when empty.
    pub fn from_readings(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, variance, sample_count: values.len() as u64 })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    position: Position,
    stats: Vec<(AnchorId, AnchorStats)>,
}

impl Fingerprint {
    pub fn new(position: Position, stats: Vec<(AnchorId, AnchorStats)>) -> Result<Self, FingerprintError> {
        if stats.is_empty() {
            return Err(FingerprintError::EmptyFingerprint(position));
        }
        for (i, (id, _)) in stats.iter().enumerate() {
            if stats[..i].iter().any(|(other, _)| other == id) {
                return Err(CoreError::DuplicateScanAnchor(id.clone()).into());
            }
        }
        Ok(Self { position, stats })
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn get(&self, id: &AnchorId) -> Option<&AnchorStats> {
        self.stats.iter().find(|(k, _)| k == id).map(|(_, s)| s)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AnchorId, &AnchorStats)> + '_ {
        self.stats.iter().map(|(k, s)| (k, s))
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }
}

/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintDatabase {
    anchors: AnchorSet,
    fingerprints: Vec<Fingerprint>,
}

impl FingerprintDatabase {
    pub fn new(anchors: AnchorSet, fingerprints: Vec<Fingerprint>) -> Result<Self, FingerprintError> {
        if fingerprints.is_empty() {
            return Err(FingerprintError::EmptyDatabase);
        }
        for (i, fp) in fingerprints.iter().enumerate() {
            if fingerprints[..i].iter().any(|o| o.position == fp.position) {
                return Err(FingerprintError::DuplicatePosition(fp.position));
            }
            if let Some((id, _)) = fp.stats.iter().find(|(id, _)| !anchors.contains(id)) {
                return Err(CoreError::UnknownAnchor(id.clone()).into());
            }
        }
        Ok(Self { anchors, fingerprints })
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn fingerprints(&self) -> &[Fingerprint] {
        &self.fingerprints
    }

    pub fn len(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprints.is_empty()
    }
}

/// One surveyed position and the scans recorded there.
#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    pub position: Position,
    pub scans: Vec<ScanVector>,
}

/// Builds per-anchor population statistics for each surveyed position.
///
/// Fingerprint order follows survey order. Anchors heard in none of a
/// position's scans get no entry there.
pub fn build_database(anchors: AnchorSet, surveys: &[Survey]) -> Result<FingerprintDatabase, FingerprintError> {
    let mut fingerprints = Vec::with_capacity(surveys.len());
    for (i, survey) in surveys.iter().enumerate() {
        if survey.scans.is_empty() {
            return Err(FingerprintError::EmptySurvey(survey.position));
        }
        if surveys[..i].iter().any(|s| s.position == survey.position) {
            return Err(FingerprintError::DuplicatePosition(survey.position));
        }
        for scan in &survey.scans {
            scan.check_against(&anchors)?;
        }
        let stats: Vec<_> = anchors
            .iter()
            .filter_map(|anchor| {
                let readings: Vec<f64> =
                    survey.scans.iter().filter_map(|s| s.get(&anchor.id)).map(|r| r.dbm()).collect();
                AnchorStats::from_readings(&readings).map(|st| (anchor.id.clone(), st))
            })
            .collect();
        fingerprints.push(Fingerprint::new(survey.position, stats)?);
    }
    FingerprintDatabase::new(anchors, fingerprints)
}
