use crate::types::{Position, ScanVector};

use super::{Fingerprint, FingerprintDatabase, FingerprintError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    k: usize,
}

impl KnnConfig {
    pub const DEFAULT_K: usize = 4;

    pub fn new(k: usize) -> Result<Self, FingerprintError> {
        if k == 0 {
            return Err(FingerprintError::InvalidK);
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: Self::DEFAULT_K }
    }
}

/// Euclidean distance in dB between the scan and the fingerprint means, over
/// the anchors present on both sides.
pub fn rssi_distance(scan: &ScanVector, fp: &Fingerprint) -> Result<f64, FingerprintError> {
    let mut shared = 0usize;
    let mut sum = 0.0;
    for (id, rssi) in scan.iter() {
        if let Some(stats) = fp.get(id) {
            let d = stats.mean() - rssi.dbm();
            sum += d * d;
            shared += 1;
        }
    }
    if shared == 0 {
        return Err(FingerprintError::NoCommonAnchors);
    }
    Ok(sum.sqrt())
}

/// Unweighted mean position of the `k` fingerprints closest in RSSI space.
///
/// Fingerprints sharing no anchor with the scan are not candidates. Equal
/// distances are ordered by database position.
pub fn knn_locate(db: &FingerprintDatabase, scan: &ScanVector, cfg: &KnnConfig) -> Result<Position, FingerprintError> {
    let mut ranked: Vec<(f64, usize)> = db
        .fingerprints()
        .iter()
        .enumerate()
        .filter_map(|(i, fp)| rssi_distance(scan, fp).ok().map(|d| (d, i)))
        .collect();
    let k = cfg.k();
    if ranked.len() < k {
        return Err(FingerprintError::InsufficientMatches { k, available: ranked.len() });
    }
    // Linear-time selection of the k best; (distance, index) is a total
    // order, so the selected set is exactly the first k of a full sort.
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    ranked.select_nth_unstable_by(k - 1, by_rank);
    ranked[..k].sort_by(by_rank);

    let (sx, sy) = ranked[..k].iter().fold((0.0, 0.0), |(sx, sy), &(_, i)| {
        let p = db.fingerprints()[i].position();
        (sx + p.x(), sy + p.y())
    });
    Ok(Position::new(sx / k as f64, sy / k as f64)?)
}
