use crate::types::{AnchorId, Position, ScanVector};

use super::{FingerprintDatabase, FingerprintError};

/// Variance used in place of a smaller recorded one, in dB².
pub const VARIANCE_FLOOR_DB2: f64 = 1.0;

/// Naive Bayes scores for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesPosteriors {
    /// For every scanned anchor that at least one fingerprint knows: the
    /// posterior over those fingerprints, as `(fingerprint index, P)`.
    pub per_anchor: Vec<(AnchorId, Vec<(usize, f64)>)>,
    /// Mean of each fingerprint's per-anchor posteriors, in database order.
    /// Fingerprints sharing no anchor with the scan are absent.
    pub scores: Vec<(usize, f64)>,
}

impl BayesPosteriors {
    pub fn score(&self, index: usize) -> Option<f64> {
        self.scores.iter().find(|(i, _)| *i == index).map(|(_, s)| *s)
    }

    /// Highest score; the earliest fingerprint wins ties.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.scores
            .iter()
            .copied()
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
    }
}

fn log_gaussian(x: f64, mean: f64, variance: f64) -> f64 {
    let v = variance.max(VARIANCE_FLOOR_DB2);
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - mean) * (x - mean) / (2.0 * v)
}

/// Per-anchor posteriors with a uniform prior, averaged over anchors.
///
/// For anchor `j`, `P(y_i | S_j) = p(S_j | y_i) / Σ_k p(S_j | y_k)` over the
/// fingerprints that recorded `j` (the uniform prior cancels). Likelihoods
/// are Gaussian densities and are normalized in log space so that distant
/// readings do not underflow to `0/0`.
pub fn bayes_posteriors(db: &FingerprintDatabase, scan: &ScanVector) -> Result<BayesPosteriors, FingerprintError> {
    let n = db.len();
    let mut per_anchor = Vec::new();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];

    for (id, rssi) in scan.iter() {
        let logs: Vec<(usize, f64)> = db
            .fingerprints()
            .iter()
            .enumerate()
            .filter_map(|(i, fp)| fp.get(id).map(|st| (i, log_gaussian(rssi.dbm(), st.mean(), st.variance()))))
            .collect();
        if logs.is_empty() {
            continue;
        }
        let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<(usize, f64)> = logs.iter().map(|&(i, l)| (i, (l - max).exp())).collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let posterior: Vec<(usize, f64)> = weights.into_iter().map(|(i, w)| (i, w / total)).collect();
        for &(i, p) in &posterior {
            sums[i] += p;
            counts[i] += 1;
        }
        per_anchor.push((id.clone(), posterior));
    }

    let scores: Vec<(usize, f64)> = (0..n)
        .filter(|&i| counts[i] > 0)
        .map(|i| (i, sums[i] / counts[i] as f64))
        .collect();
    if scores.is_empty() {
        return Err(FingerprintError::NoCommonAnchors);
    }
    Ok(BayesPosteriors { per_anchor, scores })
}

/// Position of the fingerprint with the highest averaged posterior.
pub fn bayes_locate(db: &FingerprintDatabase, scan: &ScanVector) -> Result<Position, FingerprintError> {
    let post = bayes_posteriors(db, scan)?;
    let (best, _) = post.best().ok_or(FingerprintError::NoCommonAnchors)?;
    Ok(db.fingerprints()[best].position())
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{AnchorStats, Fingerprint};
    use super::*;
    use proptest::prelude::*;

    fn oracle_db() -> FingerprintDatabase {
        let f = |x: f64, y: f64, a: (f64, f64), b: (f64, f64)| {
            Fingerprint::new(
                pos(x, y),
                vec![
                    (id("A"), AnchorStats::new(a.0, a.1, 100).unwrap()),
                    (id("B"), AnchorStats::new(b.0, b.1, 100).unwrap()),
                ],
            )
            .unwrap()
        };
        FingerprintDatabase::new(
            anchors(&["A", "B"]),
            vec![
                f(0.0, 0.0, (-50.0, 4.0), (-70.0, 9.0)),
                f(2.0, 0.0, (-58.0, 2.5), (-62.0, 0.0)),
                f(1.0, 2.0, (-65.0, 6.0), (-55.0, 3.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn matches_arbitrary_precision_oracle() {
        // Frozen from a 50-digit mpmath evaluation of the Bayes chain with a
        // uniform prior and the 1 dB² variance floor.
        let expected = [0.3794259326111765, 0.6204721364675625, 0.00010193092126098344];
        let expected_a = [0.7239892936567408, 0.2758282581981785, 0.00018244814508073];
        let expected_b = [0.03486257156561234, 0.9651160147369464, 2.141369744123688e-05];
        let post = bayes_posteriors(&oracle_db(), &scan(&[("A", -54.0), ("B", -63.0)])).unwrap();
        for i in 0..3 {
            assert!((post.score(i).unwrap() - expected[i]).abs() < 1e-12);
            assert!((post.per_anchor[0].1[i].1 - expected_a[i]).abs() < 1e-12);
            assert!((post.per_anchor[1].1[i].1 - expected_b[i]).abs() < 1e-12);
        }
        let p = bayes_locate(&oracle_db(), &scan(&[("A", -54.0), ("B", -63.0)])).unwrap();
        assert_eq!(p, pos(2.0, 0.0));
    }

    #[test]
    fn likelihood_dominance() {
        let db = FingerprintDatabase::new(
            anchors(&["A"]),
            vec![fp(0.0, 0.0, &[("A", -50.0)], 4.0), fp(1.0, 0.0, &[("A", -70.0)], 4.0)],
        )
        .unwrap();
        let post = bayes_posteriors(&db, &scan(&[("A", -50.0)])).unwrap();
        assert!(post.score(0).unwrap() > post.score(1).unwrap());
        assert_eq!(bayes_locate(&db, &scan(&[("A", -50.0)])).unwrap(), pos(0.0, 0.0));
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let db = FingerprintDatabase::new(
            anchors(&["A"]),
            vec![fp(0.0, 0.0, &[("A", -50.0)], 4.0), fp(1.0, 0.0, &[("A", -60.0)], 4.0)],
        )
        .unwrap();
        let post = bayes_posteriors(&db, &scan(&[("A", -55.0)])).unwrap();
        assert!((post.score(0).unwrap() - 0.5).abs() < 1e-9);
        assert!((post.score(1).unwrap() - 0.5).abs() < 1e-9);
        // Exact tie goes to the first fingerprint.
        assert_eq!(bayes_locate(&db, &scan(&[("A", -55.0)])).unwrap(), pos(0.0, 0.0));
    }

    #[test]
    fn single_fingerprint_always_wins() {
        let db = FingerprintDatabase::new(anchors(&["A"]), vec![fp(3.0, 4.0, &[("A", -50.0)], 0.0)]).unwrap();
        assert_eq!(bayes_locate(&db, &scan(&[("A", -110.0)])).unwrap(), pos(3.0, 4.0));
    }

    #[test]
    fn far_readings_do_not_underflow() {
        let db = FingerprintDatabase::new(
            anchors(&["A"]),
            vec![fp(0.0, 0.0, &[("A", -10.0)], 0.0), fp(1.0, 0.0, &[("A", -20.0)], 0.0)],
        )
        .unwrap();
        let post = bayes_posteriors(&db, &scan(&[("A", -120.0)])).unwrap();
        assert!(post.scores.iter().all(|(_, s)| s.is_finite()));
        assert_eq!(bayes_locate(&db, &scan(&[("A", -120.0)])).unwrap(), pos(1.0, 0.0));
    }

    #[test]
    fn no_common_anchor() {
        let db = FingerprintDatabase::new(anchors(&["A", "B"]), vec![fp(0.0, 0.0, &[("B", -50.0)], 1.0)]).unwrap();
        assert_eq!(bayes_posteriors(&db, &scan(&[("A", -50.0)])), Err(FingerprintError::NoCommonAnchors));
    }

    #[test]
    fn partial_anchor_coverage_averages_known_anchors() {
        let db = FingerprintDatabase::new(
            anchors(&["A", "B"]),
            vec![fp(0.0, 0.0, &[("A", -50.0), ("B", -60.0)], 1.0), fp(1.0, 0.0, &[("A", -50.0)], 1.0)],
        )
        .unwrap();
        let post = bayes_posteriors(&db, &scan(&[("A", -50.0), ("B", -60.0)])).unwrap();
        // A splits 0.5/0.5; B is known only to fingerprint 0.
        assert!((post.score(0).unwrap() - 0.75).abs() < 1e-12);
        assert!((post.score(1).unwrap() - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn per_anchor_posteriors_normalized(
            entries in proptest::collection::vec((-100.0f64..-20.0, 0.0f64..30.0, -100.0f64..-20.0, 0.0f64..30.0), 1..30),
            s in (-120.0f64..0.0, -120.0f64..0.0),
        ) {
            let fps = entries.iter().enumerate().map(|(i, &(ma, va, mb, vb))| {
                Fingerprint::new(pos(i as f64, 0.0), vec![
                    (id("A"), AnchorStats::new(ma, va, 10).unwrap()),
                    (id("B"), AnchorStats::new(mb, vb, 10).unwrap()),
                ]).unwrap()
            }).collect();
            let db = FingerprintDatabase::new(anchors(&["A", "B"]), fps).unwrap();
            let post = bayes_posteriors(&db, &scan(&[("A", s.0), ("B", s.1)])).unwrap();
            for (_, p) in &post.per_anchor {
                let total: f64 = p.iter().map(|(_, v)| v).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            prop_assert!(post.scores.iter().all(|(_, s)| (0.0..=1.0).contains(s)));
        }
    }
}
