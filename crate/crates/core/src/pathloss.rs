//! Log-distance path-loss model: `RSSI = -10 n log10(d) + C`.
//!
//! The model is linear in `(log10 d, RSSI)`, so fitting is an ordinary
//! least-squares line with slope `-10 n` and intercept `C`.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::numfmt::sig17;
use crate::types::{AnchorId, CoreError, Rssi};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathLossError {
    #[error("need at least 2 distinct calibration distances, got {0}")]
    TooFewSamples(usize),
    #[error("distance must be finite and > 0 m, got {0}")]
    NonPositiveDistance(f64),
    #[error("predicted RSSI {0} dBm falls outside the valid RSSI range")]
    ModelOutOfRange(f64),
    #[error("path-loss exponent must be finite and > 0, got {0}")]
    InvalidExponent(f64),
    #[error("intercept must be finite, got {0}")]
    InvalidIntercept(f64),
    #[error("calibration data gives RSSI that does not decay with distance (fitted exponent {0})")]
    NonDecayingFit(f64),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for PathLossError {
    fn from(e: std::io::Error) -> Self {
        PathLossError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    distance: f64,
    rssi: Rssi,
}

impl CalibrationSample {
    pub fn new(distance: f64, rssi: Rssi) -> Result<Self, PathLossError> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(PathLossError::NonPositiveDistance(distance));
        }
        Ok(Self { distance, rssi })
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn rssi(&self) -> Rssi {
        self.rssi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    exponent: f64,
    intercept: f64,
    r_squared: f64,
}

impl PathLossModel {
    /// A model given directly rather than fitted; its R² is recorded as 1.
    pub fn new(exponent: f64, intercept: f64) -> Result<Self, PathLossError> {
        Self::with_r_squared(exponent, intercept, 1.0)
    }

    pub fn with_r_squared(exponent: f64, intercept: f64, r_squared: f64) -> Result<Self, PathLossError> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(PathLossError::InvalidExponent(exponent));
        }
        if !intercept.is_finite() {
            return Err(PathLossError::InvalidIntercept(intercept));
        }
        let r_squared = if r_squared.is_finite() { r_squared.clamp(0.0, 1.0) } else { 0.0 };
        Ok(Self { exponent, intercept, r_squared })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn r_squared(&self) -> f64 {
        self.r_squared
    }

    /// Unclamped model value at `distance`.
    pub fn rssi_at(&self, distance: f64) -> f64 {
        -10.0 * self.exponent * distance.log10() + self.intercept
    }
}

/// Least-squares fit of RSSI against `log10(distance)`.
///
/// Samples are sorted before accumulation, so the result is bit-identical for
/// any ordering of the input.
pub fn fit_path_loss(samples: &[CalibrationSample]) -> Result<PathLossModel, PathLossError> {
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.distance, s.rssi.dbm())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let distinct = {
        let mut d: Vec<f64> = pts.iter().map(|p| p.0).collect();
        d.dedup();
        d.len()
    };
    if distinct < 2 {
        return Err(PathLossError::TooFewSamples(distinct));
    }

    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, (_, y)) in xs.iter().zip(&pts) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let exponent = -slope / 10.0;
    if exponent.is_nan() || exponent <= 0.0 {
        return Err(PathLossError::NonDecayingFit(exponent));
    }

    let ss_res: f64 = xs
        .iter()
        .zip(&pts)
        .map(|(x, (_, y))| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    // A perfect fit has ss_res at rounding level; syy is strictly positive
    // here because a non-zero slope implies the RSSI values vary.
    let r_squared = 1.0 - ss_res / syy;

    PathLossModel::with_r_squared(exponent, intercept, r_squared)
}

pub fn predict_rssi(model: &PathLossModel, distance: f64) -> Result<Rssi, PathLossError> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(PathLossError::NonPositiveDistance(distance));
    }
    let value = model.rssi_at(distance);
    Rssi::new(value).map_err(|_| PathLossError::ModelOutOfRange(value))
}

/// Distance at which the model predicts `rssi`. Always positive.
pub fn invert_distance(model: &PathLossModel, rssi: Rssi) -> f64 {
    10f64.powf((model.intercept - rssi.dbm()) / (10.0 * model.exponent))
}

/// Result of reading a calibration CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub samples: Vec<CalibrationSample>,
    /// Rows at exactly 0 m, which the model cannot use and which were dropped.
    pub dropped_zero_distance: usize,
}

pub const CALIBRATION_HEADER: &str = "distance_m,rssi_dbm";

/// Reads `distance_m,rssi_dbm` rows. Rows at distance 0 are dropped and
/// counted; negative distances are an error.
pub fn read_calibration_csv<R: BufRead>(reader: R) -> Result<CalibrationSet, PathLossError> {
    let mut samples = Vec::new();
    let mut dropped = 0;
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !saw_header {
            if line.trim() != CALIBRATION_HEADER {
                return Err(PathLossError::Parse {
                    line: line_no,
                    reason: format!("expected header `{CALIBRATION_HEADER}`, got `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| PathLossError::Parse { line: line_no, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, got {}", fields.len())));
        }
        let distance: f64 = fields[0].parse().map_err(|_| parse_err(format!("bad distance `{}`", fields[0])))?;
        let rssi: f64 = fields[1].parse().map_err(|_| parse_err(format!("bad rssi `{}`", fields[1])))?;
        if distance == 0.0 {
            dropped += 1;
            continue;
        }
        let rssi = Rssi::new(rssi).map_err(|e| parse_err(e.to_string()))?;
        let sample = CalibrationSample::new(distance, rssi).map_err(|e| parse_err(e.to_string()))?;
        samples.push(sample);
    }
    if !saw_header {
        return Err(PathLossError::Parse { line: 1, reason: "empty file".into() });
    }
    Ok(CalibrationSet { samples, dropped_zero_distance: dropped })
}

pub fn write_calibration_csv<W: Write>(mut w: W, samples: &[CalibrationSample]) -> std::io::Result<()> {
    writeln!(w, "{CALIBRATION_HEADER}")?;
    for s in samples {
        writeln!(w, "{},{}", s.distance, s.rssi.dbm())?;
    }
    Ok(())
}

/// Path-loss models keyed by anchor, with an optional fallback used for any
/// anchor without its own entry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelTable {
    fallback: Option<PathLossModel>,
    per_anchor: Vec<(AnchorId, PathLossModel)>,
}

pub const MODELS_HEADER: &str = "anchor_id,exponent_n,intercept_c,r_squared";
/// Anchor column value that marks the fallback model.
pub const FALLBACK_KEY: &str = "*";

impl ModelTable {
    pub fn uniform(model: PathLossModel) -> Self {
        Self { fallback: Some(model), per_anchor: Vec::new() }
    }

    pub fn set_fallback(&mut self, model: PathLossModel) {
        self.fallback = Some(model);
    }

    pub fn insert(&mut self, id: AnchorId, model: PathLossModel) {
        match self.per_anchor.iter_mut().find(|(k, _)| *k == id) {
            Some(slot) => slot.1 = model,
            None => self.per_anchor.push((id, model)),
        }
    }

    pub fn get(&self, id: &AnchorId) -> Option<&PathLossModel> {
        self.per_anchor
            .iter()
            .find(|(k, _)| k == id)
            .map(|(_, m)| m)
            .or(self.fallback.as_ref())
    }

    pub fn fallback(&self) -> Option<&PathLossModel> {
        self.fallback.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.fallback.is_none() && self.per_anchor.is_empty()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MODELS_HEADER}")?;
        let row = |w: &mut W, key: &str, m: &PathLossModel| {
            writeln!(w, "{key},{},{},{}", sig17(m.exponent), sig17(m.intercept), sig17(m.r_squared))
        };
        if let Some(m) = &self.fallback {
            row(&mut w, FALLBACK_KEY, m)?;
        }
        for (id, m) in &self.per_anchor {
            row(&mut w, id.as_str(), m)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, PathLossError> {
        let mut table = ModelTable::default();
        let mut saw_header = false;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            let parse_err = |reason: String| PathLossError::Parse { line: line_no, reason };
            if !saw_header {
                if line.trim() != MODELS_HEADER {
                    return Err(parse_err(format!("expected header `{MODELS_HEADER}`")));
                }
                saw_header = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, got {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(format!("bad number `{s}`")));
            let model = PathLossModel::with_r_squared(num(fields[1])?, num(fields[2])?, num(fields[3])?)
                .map_err(|e| parse_err(e.to_string()))?;
            if fields[0] == FALLBACK_KEY {
                table.fallback = Some(model);
            } else {
                let id = AnchorId::new(fields[0]).map_err(|e| parse_err(e.to_string()))?;
                table.insert(id, model);
            }
        }
        if !saw_header {
            return Err(PathLossError::Parse { line: 1, reason: "empty file".into() });
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(n: f64, c: f64) -> PathLossModel {
        PathLossModel::new(n, c).unwrap()
    }

    fn noiseless(n: f64, c: f64, distances: &[f64]) -> Vec<CalibrationSample> {
        distances
            .iter()
            .map(|&d| CalibrationSample::new(d, Rssi::new(-10.0 * n * d.log10() + c).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn fit_recovers_noiseless_model() {
        let m = fit_path_loss(&noiseless(2.0, -40.0, &[1.0, 2.0, 5.0, 10.0])).unwrap();
        assert!((m.exponent() - 2.0).abs() < 1e-12);
        assert!((m.intercept() + 40.0).abs() < 1e-12);
        assert!((m.r_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_single_distance() {
        let samples = noiseless(2.0, -40.0, &[3.0, 3.0, 3.0]);
        assert_eq!(fit_path_loss(&samples), Err(PathLossError::TooFewSamples(1)));
        assert_eq!(fit_path_loss(&[]), Err(PathLossError::TooFewSamples(0)));
    }

    #[test]
    fn fit_rejects_rising_rssi() {
        let samples = vec![
            CalibrationSample::new(1.0, Rssi::new(-70.0).unwrap()).unwrap(),
            CalibrationSample::new(10.0, Rssi::new(-50.0).unwrap()).unwrap(),
        ];
        assert!(matches!(fit_path_loss(&samples), Err(PathLossError::NonDecayingFit(_))));
    }

    #[test]
    fn sample_rejects_non_positive_distance() {
        let r = Rssi::new(-50.0).unwrap();
        assert_eq!(CalibrationSample::new(0.0, r), Err(PathLossError::NonPositiveDistance(0.0)));
        assert!(CalibrationSample::new(-1.0, r).is_err());
        assert!(CalibrationSample::new(f64::NAN, r).is_err());
    }

    #[test]
    fn predict_examples() {
        let m = model(2.0, -40.0);
        assert_eq!(predict_rssi(&m, 1.0).unwrap().dbm(), -40.0);
        assert_eq!(predict_rssi(&m, 10.0).unwrap().dbm(), -60.0);
        // Frozen from a direct evaluation of the model formula.
        let table1 = model(2.935, -50.33);
        let v = predict_rssi(&table1, 4.0).unwrap().dbm();
        assert!((v - -68.00046074547569).abs() < 1e-9, "{v}");
    }

    #[test]
    fn predict_errors() {
        let m = model(2.0, -40.0);
        assert_eq!(predict_rssi(&m, 0.0), Err(PathLossError::NonPositiveDistance(0.0)));
        assert!(matches!(predict_rssi(&m, 1e6), Err(PathLossError::ModelOutOfRange(_))));
        // Closer than 1 m with a strong intercept goes above 0 dBm.
        assert!(matches!(predict_rssi(&model(2.0, -5.0), 0.1), Err(PathLossError::ModelOutOfRange(_))));
    }

    #[test]
    fn invert_examples() {
        let m = model(2.0, -40.0);
        assert!((invert_distance(&m, Rssi::new(-40.0).unwrap()) - 1.0).abs() < 1e-15);
        assert!((invert_distance(&m, Rssi::new(-60.0).unwrap()) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_csv_drops_zero_rows() {
        let text = "distance_m,rssi_dbm\n0,-30\n0.1,-31.5\n1,-50\n2.5,-61.25\n";
        let set = read_calibration_csv(text.as_bytes()).unwrap();
        assert_eq!(set.dropped_zero_distance, 1);
        assert_eq!(set.samples.len(), 3);
        let err = read_calibration_csv("distance_m,rssi_dbm\n-1,-40\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PathLossError::Parse { line: 2, .. }));
        let err = read_calibration_csv("d,r\n1,-40\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PathLossError::Parse { line: 1, .. }));
    }

    #[test]
    fn model_table_round_trip_and_fallback() {
        let mut t = ModelTable::uniform(model(2.935, -50.33));
        let b = AnchorId::new("B").unwrap();
        t.insert(b.clone(), PathLossModel::with_r_squared(2.271, -75.48, 0.85).unwrap());
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = ModelTable::read(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get(&b).unwrap().exponent(), 2.271);
        assert_eq!(back.get(&AnchorId::new("Z").unwrap()).unwrap().exponent(), 2.935);
        assert!(ModelTable::default().get(&b).is_none());
    }

    proptest! {
        #[test]
        fn round_trip_distance(n in 1.5f64..4.0, c in -70.0f64..-30.0, d in 0.1f64..100.0) {
            let m = model(n, c);
            prop_assume!((Rssi::MIN_DBM..=Rssi::MAX_DBM).contains(&m.rssi_at(d)));
            let back = invert_distance(&m, predict_rssi(&m, d).unwrap());
            prop_assert!(((back - d) / d).abs() < 1e-9);
        }

        #[test]
        fn predict_strictly_decreasing(n in 0.5f64..5.0, c in -60.0f64..-20.0, d in 0.5f64..50.0, step in 1e-3f64..10.0) {
            let m = model(n, c);
            prop_assert!(m.rssi_at(d + step) < m.rssi_at(d));
            let r1 = Rssi::saturating(m.rssi_at(d)).unwrap();
            let r2 = Rssi::saturating(m.rssi_at(d) - 1.0).unwrap();
            prop_assume!(r1 != r2);
            prop_assert!(invert_distance(&m, r2) > invert_distance(&m, r1));
        }

        #[test]
        fn exact_recovery(n in 1.0f64..4.0, c in -60.0f64..-30.0,
                          ds in proptest::collection::vec(0.2f64..20.0, 2..30)) {
            let mut distinct = ds.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            prop_assume!(distinct.len() >= 2 && distinct[distinct.len() - 1] / distinct[0] > 1.01);
            let m = fit_path_loss(&noiseless(n, c, &ds)).unwrap();
            prop_assert!((m.exponent() - n).abs() < 1e-9);
            prop_assert!((m.intercept() - c).abs() < 1e-9);
            prop_assert!((m.r_squared() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn fit_is_permutation_invariant(pts in proptest::collection::vec((0.1f64..10.0, -100.0f64..-20.0), 3..25),
                                        seed in any::<u64>()) {
            let samples: Vec<_> = pts.iter()
                .map(|&(d, r)| CalibrationSample::new(d, Rssi::new(r).unwrap()).unwrap())
                .collect();
            let mut shuffled = samples.clone();
            // Deterministic Fisher-Yates driven by the proptest seed.
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(fit_path_loss(&samples), fit_path_loss(&shuffled));
        }
    }
}
