//! Brute-force reference implementations of the fingerprint estimators.
//!
//! Written as literally as possible and sharing no code with
//! [`crate::fingerprint`], so agreement between the two is meaningful. Only
//! tests and the acceptance suite should call these.

use crate::fingerprint::{AnchorStats, Fingerprint, FingerprintDatabase, FingerprintError};
use crate::types::{Anchor, AnchorId, AnchorSet, Position, Rssi, ScanVector};

use super::rng::SimRng;

/// Sorts every fingerprint by RSSI distance and averages the first `k`
/// positions.
pub fn oracle_knn(db: &FingerprintDatabase, scan: &ScanVector, k: usize) -> Result<Position, FingerprintError> {
    let mut all: Vec<(f64, usize, Position)> = Vec::new();
    for (index, fp) in db.fingerprints().iter().enumerate() {
        let mut sum_sq = 0.0;
        let mut common = 0;
        for anchor in db.anchors() {
            if let (Some(stored), Some(measured)) = (fp.get(&anchor.id), scan.get(&anchor.id)) {
                sum_sq += (stored.mean() - measured.dbm()).powi(2);
                common += 1;
            }
        }
        if common > 0 {
            all.push((sum_sq.sqrt(), index, fp.position()));
        }
    }
    if k == 0 || all.len() < k {
        return Err(FingerprintError::InsufficientMatches { k, available: all.len() });
    }
    // Insertion sort keyed on (distance, index).
    for i in 1..all.len() {
        let mut j = i;
        while j > 0 && (all[j - 1].0 > all[j].0 || (all[j - 1].0 == all[j].0 && all[j - 1].1 > all[j].1)) {
            all.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut x = 0.0;
    let mut y = 0.0;
    for item in all.iter().take(k) {
        x += item.2.x();
        y += item.2.y();
    }
    Ok(Position::new(x / k as f64, y / k as f64)?)
}

/// Averaged per-anchor posterior for every fingerprint (`None` where the
/// fingerprint shares no anchor with the scan), computed directly from
/// prior × likelihood / marginal with plain densities.
pub fn oracle_bayes(db: &FingerprintDatabase, scan: &ScanVector) -> Result<Vec<Option<f64>>, FingerprintError> {
    let fps = db.fingerprints();
    let prior = 1.0 / fps.len() as f64;
    let mut totals = vec![0.0; fps.len()];
    let mut counts = vec![0u32; fps.len()];

    for anchor in db.anchors() {
        let Some(measured) = scan.get(&anchor.id) else { continue };
        let s = measured.dbm();
        let mut likelihood = vec![None; fps.len()];
        for (i, fp) in fps.iter().enumerate() {
            if let Some(st) = fp.get(&anchor.id) {
                let var = if st.variance() < 1.0 { 1.0 } else { st.variance() };
                let density = (-(s - st.mean()).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                likelihood[i] = Some(density);
            }
        }
        let marginal: f64 = likelihood.iter().flatten().map(|l| l * prior).sum();
        for (i, l) in likelihood.iter().enumerate() {
            if let Some(l) = l {
                totals[i] += l * prior / marginal;
                counts[i] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(FingerprintError::NoCommonAnchors);
    }
    Ok(totals.iter().zip(&counts).map(|(t, &c)| (c > 0).then(|| t / c as f64)).collect())
}

/// A random database (5 to 60 fingerprints over 3 to 6 anchors, some
/// readings missing) and a scan drawn near one of its fingerprints. Readings
/// stay within a few standard deviations of the stored means, so the plain
/// densities in [`oracle_bayes`] never underflow.
pub fn random_case(seed: u64) -> (FingerprintDatabase, ScanVector) {
    let mut rng = SimRng::seed_from_u64(seed);
    let n_anchors = 3 + (rng.uniform() * 4.0) as usize;
    let anchors = AnchorSet::new(
        (0..n_anchors)
            .map(|i| {
                let p = Position::new(rng.uniform_in(0.0, 20.0), rng.uniform_in(0.0, 20.0)).unwrap();
                Anchor::new(AnchorId::new(format!("A{i}")).unwrap(), p)
            })
            .collect(),
    )
    .unwrap();

    let n_fps = 5 + (rng.uniform() * 56.0) as usize;
    let mut fps = Vec::with_capacity(n_fps);
    for i in 0..n_fps {
        // A unique position per index keeps the database valid.
        let p = Position::new(i as f64 * 0.37 + rng.uniform(), rng.uniform_in(0.0, 20.0)).unwrap();
        let mut stats = Vec::new();
        for (j, a) in anchors.iter().enumerate() {
            if j > 0 && rng.uniform() < 0.15 {
                continue;
            }
            let mean = rng.uniform_in(-90.0, -40.0);
            let var = rng.uniform_in(0.2, 16.0);
            stats.push((a.id.clone(), AnchorStats::new(mean, var, 100).unwrap()));
        }
        fps.push(Fingerprint::new(p, stats).unwrap());
    }

    let target = &fps[(rng.uniform() * n_fps as f64) as usize];
    let mut entries = Vec::new();
    for a in anchors.iter() {
        if rng.uniform() < 0.1 {
            continue;
        }
        let centre = target.get(&a.id).map(|s| s.mean()).unwrap_or(-65.0);
        let reading = (centre + 4.0 * rng.normal()).clamp(-95.0, -35.0);
        entries.push((a.id.clone(), Rssi::new(reading).unwrap()));
    }
    if entries.is_empty() {
        let first = anchors.iter().next().unwrap();
        entries.push((first.id.clone(), Rssi::new(target.get(&first.id).unwrap().mean()).unwrap()));
    }
    let db = FingerprintDatabase::new(anchors, fps).unwrap();
    (db, ScanVector::new(entries).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::{bayes_posteriors, knn_locate, KnnConfig};

    #[test]
    fn knn_matches_oracle() {
        for seed in 0..500 {
            let (db, scan) = random_case(seed);
            for k in [1, 3, 4] {
                let fast = knn_locate(&db, &scan, &KnnConfig::new(k).unwrap());
                let slow = oracle_knn(&db, &scan, k);
                match (fast, slow) {
                    (Ok(a), Ok(b)) => assert!(a.distance_to(&b) <= 1e-9, "seed {seed} k {k}: {a} vs {b}"),
                    (Err(_), Err(_)) => {}
                    (a, b) => panic!("seed {seed} k {k}: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn bayes_matches_oracle() {
        for seed in 0..500 {
            let (db, scan) = random_case(seed);
            let fast = bayes_posteriors(&db, &scan).unwrap();
            let slow = oracle_bayes(&db, &scan).unwrap();
            for (i, expected) in slow.iter().enumerate() {
                match (fast.score(i), expected) {
                    (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9, "seed {seed} fp {i}: {a} vs {b}"),
                    (None, None) => {}
                    (a, b) => panic!("seed {seed} fp {i}: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn random_cases_are_deterministic() {
        assert_eq!(random_case(7), random_case(7));
    }
}
