//! Domain types shared by every estimator.
//!
//! All of them validate on construction and are immutable afterwards, so a
//! value that exists is a value that satisfies its invariants.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("position coordinates must be finite, got ({x}, {y})")]
    NonFinitePosition { x: f64, y: f64 },
    #[error("anchor id must be non-empty")]
    EmptyAnchorId,
    #[error("anchor id {0:?} contains a reserved character (',', ':' or whitespace)")]
    ReservedCharInAnchorId(String),
    #[error("anchor set must contain at least one anchor")]
    EmptyAnchorSet,
    #[error("duplicate anchor id {0}")]
    DuplicateAnchor(AnchorId),
    #[error("RSSI {0} dBm is outside [{min}, {max}] dBm or not finite", min = Rssi::MIN_DBM, max = Rssi::MAX_DBM)]
    InvalidRssi(f64),
    #[error("scan lists anchor {0} more than once")]
    DuplicateScanAnchor(AnchorId),
    #[error("anchor {0} is not part of the anchor set")]
    UnknownAnchor(AnchorId),
}

/// A point on the floor plan, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    x: f64,
    y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Result<Self, CoreError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(CoreError::NonFinitePosition { x, y })
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Identifier of a transmitter. Compared by exact string match.
///
/// Commas, colons and whitespace are rejected because they delimit fields in
/// the database and CSV formats.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AnchorId(String);

impl AnchorId {
    pub fn new(id: impl Into<String>) -> Result<Self, CoreError> {
        let id = id.into();
        if id.is_empty() {
            return Err(CoreError::EmptyAnchorId);
        }
        if id.chars().any(|c| c == ',' || c == ':' || c.is_whitespace()) {
            return Err(CoreError::ReservedCharInAnchorId(id));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub id: AnchorId,
    pub position: Position,
}

impl Anchor {
    pub fn new(id: AnchorId, position: Position) -> Self {
        Self { id, position }
    }
}

/// The transmitters of one deployment, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, CoreError> {
        if anchors.is_empty() {
            return Err(CoreError::EmptyAnchorSet);
        }
        for (i, a) in anchors.iter().enumerate() {
            if anchors[..i].iter().any(|b| b.id == a.id) {
                return Err(CoreError::DuplicateAnchor(a.id.clone()));
            }
        }
        Ok(Self { anchors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Anchor> {
        self.anchors.iter()
    }

    pub fn get(&self, id: &AnchorId) -> Option<&Anchor> {
        self.anchors.iter().find(|a| &a.id == id)
    }

    pub fn contains(&self, id: &AnchorId) -> bool {
        self.get(id).is_some()
    }

    /// Index of `id` in insertion order.
    pub fn index_of(&self, id: &AnchorId) -> Option<usize> {
        self.anchors.iter().position(|a| &a.id == id)
    }
}

impl<'a> IntoIterator for &'a AnchorSet {
    type Item = &'a Anchor;
    type IntoIter = std::slice::Iter<'a, Anchor>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

/// Received signal strength in dBm, restricted to `[-120, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Rssi(f64);

impl Rssi {
    pub const MIN_DBM: f64 = -120.0;
    pub const MAX_DBM: f64 = 0.0;

    pub fn new(dbm: f64) -> Result<Self, CoreError> {
        if dbm.is_finite() && (Self::MIN_DBM..=Self::MAX_DBM).contains(&dbm) {
            Ok(Self(dbm))
        } else {
            Err(CoreError::InvalidRssi(dbm))
        }
    }

    /// Clamps a finite value into the valid range. NaN is still rejected.
    pub fn saturating(dbm: f64) -> Result<Self, CoreError> {
        if dbm.is_nan() {
            return Err(CoreError::InvalidRssi(dbm));
        }
        Ok(Self(dbm.clamp(Self::MIN_DBM, Self::MAX_DBM)))
    }

    pub fn dbm(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Rssi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} dBm", self.0)
    }
}

/// One reading per heard anchor. Anchors that were not heard are simply
/// absent; there is no sentinel value.
///
/// Equality ignores entry order.
#[derive(Debug, Clone, Default)]
pub struct ScanVector {
    entries: Vec<(AnchorId, Rssi)>,
}

impl ScanVector {
    pub fn new(entries: Vec<(AnchorId, Rssi)>) -> Result<Self, CoreError> {
        for (i, (id, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(other, _)| other == id) {
                return Err(CoreError::DuplicateScanAnchor(id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, id: &AnchorId) -> Option<Rssi> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, v)| *v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AnchorId, Rssi)> + '_ {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Fails if the scan mentions an anchor outside `anchors`.
    pub fn check_against(&self, anchors: &AnchorSet) -> Result<(), CoreError> {
        match self.entries.iter().find(|(id, _)| !anchors.contains(id)) {
            Some((id, _)) => Err(CoreError::UnknownAnchor(id.clone())),
            None => Ok(()),
        }
    }
}

impl PartialEq for ScanVector {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().all(|(id, r)| other.get(id) == Some(r))
    }
}

/// A scan together with the position it was actually taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScan {
    pub position: Position,
    pub scan: ScanVector,
}
