//! Positional error metrics and the three-technique benchmark.
//!
//! The per-point error is the Euclidean distance between estimate and ground
//! truth. Reports call its average "mean error"; it is not a squared error.
//! Variances are population variances (divide by N).

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::fingerprint::{bayes_locate, knn_locate, FingerprintDatabase, KnnConfig};
use crate::ingest::{aggregate_scans, IngestError, RawScanRecord, Reduction};
use crate::pathloss::ModelTable;
use crate::trilat::{locate_trilateration, KalmanParams};
use crate::types::{AnchorSet, LabeledScan, Position, ScanVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty error list")]
    EmptyList,
    #[error("quantile level {0} is outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("error values must be finite and >= 0, got {0}")]
    InvalidError(f64),
    #[error("benchmark needs at least one test point")]
    EmptyTestSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TechniqueTag {
    Trilateration,
    Knn,
    NaiveBayes,
}

impl TechniqueTag {
    pub const ALL: [TechniqueTag; 3] = [TechniqueTag::Trilateration, TechniqueTag::Knn, TechniqueTag::NaiveBayes];

    pub fn as_str(self) -> &'static str {
        match self {
            TechniqueTag::Trilateration => "trilat",
            TechniqueTag::Knn => "knn",
            TechniqueTag::NaiveBayes => "bayes",
        }
    }
}

impl fmt::Display for TechniqueTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub technique: TechniqueTag,
    pub error: f64,
    pub test_index: usize,
}

pub fn localization_error(calc: &Position, real: &Position) -> f64 {
    calc.distance_to(real)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
}

/// Arithmetic mean and population variance.
///
/// Values are summed in sorted order so the result does not depend on the
/// order of `errors`.
pub fn summarize(errors: &[f64]) -> Result<Summary, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let variance = sorted.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok(Summary { mean, variance })
}

/// Sorted error values with right-continuous quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(errors: &[f64]) -> Result<Self, EvalError> {
        if errors.is_empty() {
            return Err(EvalError::EmptyList);
        }
        if let Some(&bad) = errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(EvalError::InvalidError(bad));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of errors `<= e`.
    pub fn fraction_at_or_below(&self, e: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= e) as f64 / self.sorted.len() as f64
    }

    /// Smallest error `e` with `fraction(errors <= e) >= p`.
    pub fn quantile(&self, p: f64) -> Result<f64, EvalError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(EvalError::InvalidQuantile(p));
        }
        let n = self.sorted.len();
        // Smallest count c with c / n >= p; c = 0 only matters for p = 0,
        // where the minimum is the answer.
        let c = (1..=n).find(|&c| c as f64 / n as f64 >= p).unwrap_or(n);
        Ok(self.sorted[c - 1])
    }

    /// `(error, cumulative fraction)` steps of the CDF, one per sample.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted.iter().enumerate().map(move |(i, &e)| (e, (i + 1) as f64 / n))
    }
}

/// One evaluation point. Fingerprinting and trilateration may consume
/// differently preprocessed scans of the same point (moving average versus
/// Kalman smoothing).
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub position: Position,
    pub fingerprint_scan: ScanVector,
    pub model_scan: ScanVector,
}

impl From<LabeledScan> for TestCase {
    fn from(l: LabeledScan) -> Self {
        Self { position: l.position, fingerprint_scan: l.scan.clone(), model_scan: l.scan }
    }
}

/// Builds test cases from labeled raw records: fingerprinting gets the
/// final moving-average value per anchor, trilateration the terminal Kalman
/// estimate.
pub fn test_cases_from_records(
    records: &[RawScanRecord],
    window: usize,
    kalman: &KalmanParams,
) -> Result<Vec<TestCase>, IngestError> {
    let averaged = aggregate_scans(records, Reduction::MovingAverage { window })?;
    let filtered = aggregate_scans(records, Reduction::Kalman(*kalman))?;
    Ok(averaged
        .into_iter()
        .zip(filtered)
        .map(|((position, fingerprint_scan), (_, model_scan))| TestCase { position, fingerprint_scan, model_scan })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub test_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechniqueReport {
    pub technique: TechniqueTag,
    pub samples: Vec<ErrorSample>,
    pub exclusions: Vec<Exclusion>,
    /// `None` when every test was excluded.
    pub summary: Option<Summary>,
    pub cdf: Option<EmpiricalCdf>,
}

impl TechniqueReport {
    fn from_outcomes(technique: TechniqueTag, outcomes: Vec<(usize, Result<f64, String>)>) -> Self {
        let mut samples = Vec::new();
        let mut exclusions = Vec::new();
        for (test_index, outcome) in outcomes {
            match outcome {
                Ok(error) => samples.push(ErrorSample { technique, error, test_index }),
                Err(reason) => exclusions.push(Exclusion { test_index, reason }),
            }
        }
        let errors: Vec<f64> = samples.iter().map(|s| s.error).collect();
        Self {
            technique,
            summary: summarize(&errors).ok(),
            cdf: EmpiricalCdf::new(&errors).ok(),
            samples,
            exclusions,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        self.summary.map(|s| s.mean)
    }

    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.cdf.as_ref().and_then(|c| c.quantile(p).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportMetadata {
    pub scenario: String,
    /// Radio technology label carried by the dataset (Zigbee, BLE, WiFi, ...).
    pub technology: Option<String>,
    pub database_size: usize,
    pub anchor_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    /// Always in [`TechniqueTag::ALL`] order.
    pub techniques: Vec<TechniqueReport>,
}

impl EvaluationReport {
    pub fn technique(&self, tag: TechniqueTag) -> &TechniqueReport {
        self.techniques.iter().find(|t| t.technique == tag).expect("report covers every technique")
    }
}

/// Runs trilateration, KNN and Naive Bayes on every test case.
///
/// A technique that fails on a case records an [`Exclusion`] for it instead
/// of an error sample, so per technique `samples + exclusions == tests`.
pub fn run_benchmark(
    db: &FingerprintDatabase,
    anchors: &AnchorSet,
    models: &ModelTable,
    tests: &[TestCase],
    cfg: &KnnConfig,
    scenario: &str,
) -> Result<EvaluationReport, EvalError> {
    if tests.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let score = |est: Result<Position, String>, truth: &Position| {
        est.and_then(|p| {
            let e = localization_error(&p, truth);
            if e.is_finite() {
                Ok(e)
            } else {
                Err(format!("non-finite error for estimate {p}"))
            }
        })
    };

    let techniques = TechniqueTag::ALL
        .iter()
        .map(|&tag| {
            let outcomes = tests
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let est = match tag {
                        TechniqueTag::Trilateration => {
                            locate_trilateration(&t.model_scan, anchors, models).map_err(|e| e.to_string())
                        }
                        TechniqueTag::Knn => knn_locate(db, &t.fingerprint_scan, cfg).map_err(|e| e.to_string()),
                        TechniqueTag::NaiveBayes => bayes_locate(db, &t.fingerprint_scan).map_err(|e| e.to_string()),
                    };
                    (i, score(est, &t.position))
                })
                .collect();
            TechniqueReport::from_outcomes(tag, outcomes)
        })
        .collect();

    Ok(EvaluationReport {
        metadata: ReportMetadata {
            scenario: scenario.to_string(),
            technology: None,
            database_size: db.len(),
            anchor_count: anchors.len(),
            test_count: tests.len(),
        },
        techniques,
    })
}

pub const ERRORS_HEADER: &str = "technique,test_index,error_m";
pub const SUMMARY_HEADER: &str = "technique,mean_m,variance_m2,p50,p95,n_excluded";
pub const CDF_HEADER: &str = "technique,error_m,cum_fraction";

pub fn write_errors_csv<W: Write>(mut w: W, report: &EvaluationReport) -> std::io::Result<()> {
    writeln!(w, "{ERRORS_HEADER}")?;
    for t in &report.techniques {
        for s in &t.samples {
            writeln!(w, "{},{},{}", s.technique, s.test_index, s.error)?;
        }
    }
    Ok(())
}

/// Techniques with no successful samples get empty statistic fields.
pub fn write_summary_csv<W: Write>(mut w: W, report: &EvaluationReport) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for t in &report.techniques {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            t.technique,
            opt(t.summary.map(|s| s.mean)),
            opt(t.summary.map(|s| s.variance)),
            opt(t.quantile(0.5)),
            opt(t.quantile(0.95)),
            t.exclusions.len()
        )?;
    }
    Ok(())
}

pub fn write_cdf_csv<W: Write>(mut w: W, report: &EvaluationReport) -> std::io::Result<()> {
    writeln!(w, "{CDF_HEADER}")?;
    for t in &report.techniques {
        if let Some(cdf) = &t.cdf {
            for (e, frac) in cdf.steps() {
                writeln!(w, "{},{},{}", t.technique, e, frac)?;
            }
        }
    }
    Ok(())
}

/// Human-readable header describing the report and its conventions.
pub fn write_metadata<W: Write>(mut w: W, report: &EvaluationReport) -> std::io::Result<()> {
    let m = &report.metadata;
    writeln!(w, "scenario = {}", m.scenario)?;
    writeln!(w, "technology = {}", m.technology.as_deref().unwrap_or("unspecified"))?;
    writeln!(w, "database_size = {}", m.database_size)?;
    writeln!(w, "anchor_count = {}", m.anchor_count)?;
    writeln!(w, "test_count = {}", m.test_count)?;
    writeln!(w, "error_metric = euclidean distance between estimate and truth, meters")?;
    writeln!(w, "mean_m = mean euclidean error (some reports label this MSE)")?;
    writeln!(w, "variance_m2 = population variance (divide by N)")?;
    writeln!(w, "quantiles = smallest error e with fraction(errors <= e) >= p")?;
    for t in &report.techniques {
        for x in &t.exclusions {
            writeln!(w, "excluded {} test {}: {}", t.technique, x.test_index, x.reason)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::{build_database, Survey};
    use crate::pathloss::{predict_rssi, PathLossModel};
    use crate::types::{Anchor, AnchorId, Rssi};
    use proptest::prelude::*;

    fn pos(x: f64, y: f64) -> Position {
        Position::new(x, y).unwrap()
    }

    #[test]
    fn error_examples() {
        assert_eq!(localization_error(&pos(1.0, 2.0), &pos(4.0, 6.0)), 5.0);
        assert_eq!(localization_error(&pos(1.0, 2.0), &pos(1.0, 2.0)), 0.0);
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 4.0);
        assert!((s.variance - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(summarize(&[2.5]).unwrap(), Summary { mean: 2.5, variance: 0.0 });
        assert_eq!(summarize(&[]), Err(EvalError::EmptyList));
    }

    #[test]
    fn quantile_examples() {
        let errors: Vec<f64> = (1..=100).map(f64::from).collect();
        let cdf = EmpiricalCdf::new(&errors).unwrap();
        assert_eq!(cdf.quantile(0.95).unwrap(), 95.0);
        assert_eq!(cdf.quantile(0.0).unwrap(), 1.0);
        assert_eq!(cdf.quantile(1.0).unwrap(), 100.0);
        assert_eq!(cdf.quantile(1.5), Err(EvalError::InvalidQuantile(1.5)));
        assert_eq!(cdf.quantile(-0.1), Err(EvalError::InvalidQuantile(-0.1)));
        assert_eq!(EmpiricalCdf::new(&[]), Err(EvalError::EmptyList));
        assert!(EmpiricalCdf::new(&[1.0, -1.0]).is_err());
    }

    proptest! {
        #[test]
        fn error_is_symmetric(a in (-1e3f64..1e3, -1e3f64..1e3), b in (-1e3f64..1e3, -1e3f64..1e3)) {
            let (p, q) = (pos(a.0, a.1), pos(b.0, b.1));
            prop_assert_eq!(localization_error(&p, &q), localization_error(&q, &p));
        }

        #[test]
        fn summary_permutation_invariant(v in proptest::collection::vec(0.0f64..100.0, 1..50)) {
            let mut r = v.clone();
            r.reverse();
            r.rotate_left(v.len() / 2);
            prop_assert_eq!(summarize(&v).unwrap(), summarize(&r).unwrap());
        }

        #[test]
        fn quantile_is_tight(v in proptest::collection::vec(0.0f64..10.0, 1..60), p in 0.0f64..=1.0) {
            let cdf = EmpiricalCdf::new(&v).unwrap();
            let q = cdf.quantile(p).unwrap();
            prop_assert!(cdf.fraction_at_or_below(q) >= p);
            // Dropping one copy of q drops coverage below p (unless p = 0).
            if p > 0.0 {
                let below = cdf.sorted().iter().filter(|&&e| e < q).count();
                prop_assert!((below as f64) / (v.len() as f64) < p);
            }
        }

        #[test]
        fn quantile_monotone(v in proptest::collection::vec(0.0f64..10.0, 1..60), p in 0.0f64..=1.0, dp in 0.0f64..=1.0) {
            let cdf = EmpiricalCdf::new(&v).unwrap();
            let hi = (p + dp).min(1.0);
            prop_assert!(cdf.quantile(p).unwrap() <= cdf.quantile(hi).unwrap());
        }
    }

    fn setup() -> (FingerprintDatabase, AnchorSet, ModelTable, PathLossModel) {
        let anchors = AnchorSet::new(vec![
            Anchor::new(AnchorId::new("A").unwrap(), pos(1.0, 1.0)),
            Anchor::new(AnchorId::new("B").unwrap(), pos(5.0, 1.0)),
            Anchor::new(AnchorId::new("C").unwrap(), pos(1.0, 5.0)),
        ])
        .unwrap();
        let model = PathLossModel::new(2.5, -45.0).unwrap();
        let surveys: Vec<Survey> = [(2.0, 2.0), (3.0, 2.0), (2.0, 3.0), (3.0, 3.0), (2.5, 4.0)]
            .iter()
            .map(|&(x, y)| Survey { position: pos(x, y), scans: vec![noiseless_scan(&anchors, &model, pos(x, y))] })
            .collect();
        let db = build_database(anchors.clone(), &surveys).unwrap();
        (db, anchors, ModelTable::uniform(model), model)
    }

    fn noiseless_scan(anchors: &AnchorSet, model: &PathLossModel, p: Position) -> ScanVector {
        ScanVector::new(
            anchors
                .iter()
                .map(|a| (a.id.clone(), predict_rssi(model, a.position.distance_to(&p)).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn fingerprint_scan_gives_zero_knn_error() {
        let (db, anchors, models, model) = setup();
        let test = LabeledScan { position: pos(3.0, 2.0), scan: noiseless_scan(&anchors, &model, pos(3.0, 2.0)) };
        let report =
            run_benchmark(&db, &anchors, &models, &[test.into()], &KnnConfig::new(1).unwrap(), "unit").unwrap();
        assert_eq!(report.technique(TechniqueTag::Knn).mean(), Some(0.0));
        assert_eq!(report.technique(TechniqueTag::NaiveBayes).mean(), Some(0.0));
        assert!(report.technique(TechniqueTag::Trilateration).mean().unwrap() < 1e-6);
    }

    #[test]
    fn noiseless_trilateration_and_exclusions() {
        let (db, anchors, models, model) = setup();
        let mut tests: Vec<TestCase> = [(2.2, 2.7), (3.9, 1.4), (1.6, 3.3)]
            .iter()
            .map(|&(x, y)| LabeledScan { position: pos(x, y), scan: noiseless_scan(&anchors, &model, pos(x, y)) }.into())
            .collect();
        // A point heard by only two anchors cannot be trilaterated.
        let partial = ScanVector::new(vec![
            (AnchorId::new("A").unwrap(), Rssi::new(-50.0).unwrap()),
            (AnchorId::new("B").unwrap(), Rssi::new(-55.0).unwrap()),
        ])
        .unwrap();
        tests.push(TestCase { position: pos(2.0, 2.0), fingerprint_scan: partial.clone(), model_scan: partial });
        let report = run_benchmark(&db, &anchors, &models, &tests, &KnnConfig::default(), "unit").unwrap();
        let tri = report.technique(TechniqueTag::Trilateration);
        assert!(tri.mean().unwrap() < 1e-6);
        assert_eq!(tri.exclusions.len(), 1);
        assert_eq!(tri.exclusions[0].test_index, 3);
        for t in &report.techniques {
            assert_eq!(t.samples.len() + t.exclusions.len(), tests.len());
        }
        assert_eq!(run_benchmark(&db, &anchors, &models, &[], &KnnConfig::default(), "x"), Err(EvalError::EmptyTestSet));
    }

    #[test]
    fn csv_exports_have_documented_headers() {
        let (db, anchors, models, model) = setup();
        let test = LabeledScan { position: pos(2.4, 2.6), scan: noiseless_scan(&anchors, &model, pos(2.4, 2.6)) };
        let report = run_benchmark(&db, &anchors, &models, &[test.into()], &KnnConfig::default(), "u").unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("trilat,"));
        let mut buf = Vec::new();
        write_cdf_csv(&mut buf, &report).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(CDF_HEADER));
        let mut buf = Vec::new();
        write_errors_csv(&mut buf, &report).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
