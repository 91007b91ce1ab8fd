//! Scenario simulator.
//!
//! A scenario is a rectangular room with anchors, a true path-loss model per
//! anchor, a fingerprint layout and a noise model. Received power at a point
//! is the model prediction plus two Gaussian terms in dB:
//!
//! - shadowing: a static, spatially correlated field per anchor
//!   (random Fourier features of a squared-exponential kernel with length
//!   `shadowing_corr_m`), so nearby points see similar offsets;
//! - fading: an independent draw for every single reading.
//!
//! Generation is single-threaded and fully determined by the config, seed
//! included (see [`rng`] for the exact random streams).

mod config;
pub mod oracle;
pub mod rng;

pub use config::{parse_config, write_config};

use thiserror::Error;

use crate::fingerprint::Survey;
use crate::ingest::RawScanRecord;
use crate::pathloss::{CalibrationSample, PathLossError, PathLossModel};
use crate::types::{AnchorSet, CoreError, Position, Rssi, ScanVector};
use rng::SimRng;

/// Random Fourier features per anchor in the shadowing field.
const SHADOW_FEATURES: usize = 64;

/// Calibration distances: every 0.1 m up to 1 m, then every 0.5 m to 5 m.
pub const CALIBRATION_DISTANCES: [f64; 18] =
    [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    ConfigInvalid(String),
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    PathLoss(#[from] PathLossError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    DenseGrid,
    SparseGrid,
    /// Rows offset by half a spacing on every other row.
    Alternating,
}

impl LayoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::DenseGrid => "dense-grid",
            LayoutKind::SparseGrid => "sparse-grid",
            LayoutKind::Alternating => "alternating",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dense-grid" => Some(LayoutKind::DenseGrid),
            "sparse-grid" => Some(LayoutKind::SparseGrid),
            "alternating" => Some(LayoutKind::Alternating),
            _ => None,
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    fn contains(&self, p: &Position) -> bool {
        (self.x0..=self.x1).contains(&p.x()) && (self.y0..=self.y1).contains(&p.y())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub technology: String,
    pub width_m: f64,
    pub height_m: f64,
    pub anchors: AnchorSet,
    /// True propagation per anchor, parallel to `anchors`.
    pub models: Vec<PathLossModel>,
    pub shadowing_sigma_db: f64,
    pub shadowing_corr_m: f64,
    pub fading_sigma_db: f64,
    pub layout: LayoutKind,
    /// Fingerprints are placed inside this region; test points are drawn
    /// uniformly from it.
    pub region: Region,
    pub spacing_m: f64,
    pub scans_per_point: usize,
    pub test_points: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::ConfigInvalid(msg));
        if !(self.width_m.is_finite() && self.width_m > 0.0 && self.height_m.is_finite() && self.height_m > 0.0) {
            return bad(format!("room must have positive size, got {} x {}", self.width_m, self.height_m));
        }
        let room = Region { x0: 0.0, y0: 0.0, x1: self.width_m, y1: self.height_m };
        if self.models.len() != self.anchors.len() {
            return bad(format!("{} anchors but {} path-loss models", self.anchors.len(), self.models.len()));
        }
        if let Some(a) = self.anchors.iter().find(|a| !room.contains(&a.position)) {
            return bad(format!("anchor {} at {} is outside the room", a.id, a.position));
        }
        for (name, v) in [("shadowing_sigma_db", self.shadowing_sigma_db), ("fading_sigma_db", self.fading_sigma_db)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.shadowing_corr_m.is_finite() && self.shadowing_corr_m > 0.0) {
            return bad(format!("shadowing_corr_m must be > 0, got {}", self.shadowing_corr_m));
        }
        if !(self.spacing_m.is_finite() && self.spacing_m > 0.0) {
            return bad(format!("spacing_m must be > 0, got {}", self.spacing_m));
        }
        let r = self.region;
        let corners_ok = [r.x0, r.y0, r.x1, r.y1].iter().all(|v| v.is_finite()) && r.x0 <= r.x1 && r.y0 <= r.y1;
        if !corners_ok
            || !room.contains(&Position::new(r.x0, r.y0)?)
            || !room.contains(&Position::new(r.x1, r.y1)?)
        {
            return bad(format!("region {r:?} must be a rectangle inside the room"));
        }
        if self.scans_per_point == 0 {
            return bad("scans_per_point must be >= 1".into());
        }
        if self.test_points == 0 {
            return bad("test_points must be >= 1".into());
        }
        for p in self.fingerprint_positions()? {
            if let Some(a) = self.anchors.iter().find(|a| a.position.distance_to(&p) < 1e-6) {
                return bad(format!("fingerprint {p} coincides with anchor {}", a.id));
            }
        }
        Ok(())
    }

    /// Fingerprint positions in row-major order (rows along y, then x).
    pub fn fingerprint_positions(&self) -> Result<Vec<Position>, SynthError> {
        let r = self.region;
        let s = self.spacing_m;
        let steps = |from: f64, to: f64| -> usize {
            // Tolerate rounding so that e.g. 1.5 + 6 * 0.5 still counts 4.5.
            ((to - from) / s + 1e-9).floor() as usize + 1
        };
        let rows = steps(r.y0, r.y1);
        let mut out = Vec::new();
        for row in 0..rows {
            let y = r.y0 + row as f64 * s;
            let offset = match self.layout {
                LayoutKind::Alternating if row % 2 == 1 => s / 2.0,
                _ => 0.0,
            };
            if r.x0 + offset > r.x1 + 1e-9 {
                continue;
            }
            for col in 0..steps(r.x0 + offset, r.x1) {
                out.push(Position::new(r.x0 + offset + col as f64 * s, y)?);
            }
        }
        Ok(out)
    }
}

/// One point with all the raw scans simulated there.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPoint {
    pub position: Position,
    pub scans: Vec<ScanVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: ScenarioConfig,
    pub calibration: Vec<CalibrationSample>,
    pub fingerprints: Vec<SimulatedPoint>,
    pub tests: Vec<SimulatedPoint>,
}

impl SyntheticDataset {
    /// Raw surveys, one per fingerprint position.
    pub fn surveys(&self) -> Vec<Survey> {
        self.fingerprints.iter().map(|p| Survey { position: p.position, scans: p.scans.clone() }).collect()
    }

    pub fn fingerprint_records(&self) -> Vec<RawScanRecord> {
        self.records(&self.fingerprints)
    }

    pub fn test_records(&self) -> Vec<RawScanRecord> {
        self.records(&self.tests)
    }

    /// Flattens points into canonical log rows. `seq` counts scans across
    /// the whole file; anchors follow anchor-set order within a scan.
    fn records(&self, points: &[SimulatedPoint]) -> Vec<RawScanRecord> {
        let mut out = Vec::new();
        let mut seq = 0u64;
        for p in points {
            for scan in &p.scans {
                for anchor in &self.config.anchors {
                    if let Some(rssi) = scan.get(&anchor.id) {
                        out.push(RawScanRecord {
                            seq,
                            anchor_id: anchor.id.clone(),
                            rssi,
                            position: Some(p.position),
                            technology: Some(self.config.technology.clone()),
                        });
                    }
                }
                seq += 1;
            }
        }
        out
    }
}

/// Model prediction plus `N(0, sigma²)`, clamped into the RSSI range.
pub fn sample_rssi(model: &PathLossModel, distance: f64, sigma: f64, rng: &mut SimRng) -> Result<Rssi, SynthError> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(PathLossError::NonPositiveDistance(distance).into());
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(SynthError::ConfigInvalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let value = model.rssi_at(distance) + sigma * rng.normal();
    Ok(Rssi::saturating(value)?)
}

/// Stationary Gaussian random field with unit-free squared-exponential
/// covariance `sigma² exp(-|Δ|² / (2 L²))`, approximated by random Fourier
/// features.
#[derive(Debug, Clone)]
struct ShadowField {
    amplitude: f64,
    features: Vec<(f64, f64, f64)>,
}

impl ShadowField {
    fn new(sigma: f64, corr_len: f64, rng: &mut SimRng) -> Self {
        let features = (0..SHADOW_FEATURES)
            .map(|_| {
                let wx = rng.normal() / corr_len;
                let wy = rng.normal() / corr_len;
                let phase = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
                (wx, wy, phase)
            })
            .collect();
        Self { amplitude: sigma * (2.0 / SHADOW_FEATURES as f64).sqrt(), features }
    }

    fn at(&self, p: &Position) -> f64 {
        self.amplitude * self.features.iter().map(|(wx, wy, ph)| (wx * p.x() + wy * p.y() + ph).cos()).sum::<f64>()
    }
}

/// Simulates calibration readings, fingerprint surveys and test points.
///
/// Draw order (all from one stream): shadow fields per anchor, calibration
/// readings, fingerprint scans, test positions, test scans.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<SyntheticDataset, SynthError> {
    config.validate()?;
    let mut rng = SimRng::seed_from_u64(config.seed);

    let fields: Vec<ShadowField> = (0..config.anchors.len())
        .map(|_| ShadowField::new(config.shadowing_sigma_db, config.shadowing_corr_m, &mut rng))
        .collect();

    // Single transmitter/receiver pair in the same room: each calibration
    // distance sees an independent shadowing and fading realization.
    let calibration_sigma = config.shadowing_sigma_db.hypot(config.fading_sigma_db);
    let calibration = CALIBRATION_DISTANCES
        .iter()
        .map(|&d| {
            let rssi = sample_rssi(&config.models[0], d, calibration_sigma, &mut rng)?;
            Ok(CalibrationSample::new(d, rssi)?)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let simulate_point = |p: Position, rng: &mut SimRng| -> Result<SimulatedPoint, SynthError> {
        let scans = (0..config.scans_per_point)
            .map(|_| {
                let entries = config
                    .anchors
                    .iter()
                    .zip(&config.models)
                    .zip(&fields)
                    .map(|((anchor, model), field)| {
                        let d = anchor.position.distance_to(&p);
                        let faded = sample_rssi(model, d, config.fading_sigma_db, rng)?;
                        Ok((anchor.id.clone(), Rssi::saturating(faded.dbm() + field.at(&p))?))
                    })
                    .collect::<Result<Vec<_>, SynthError>>()?;
                Ok(ScanVector::new(entries)?)
            })
            .collect::<Result<Vec<_>, SynthError>>()?;
        Ok(SimulatedPoint { position: p, scans })
    };

    let fingerprints = config
        .fingerprint_positions()?
        .into_iter()
        .map(|p| simulate_point(p, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;

    let r = config.region;
    let mut tests = Vec::with_capacity(config.test_points);
    for _ in 0..config.test_points {
        let p = Position::new(rng.uniform_in(r.x0, r.x1), rng.uniform_in(r.y0, r.y1))?;
        tests.push(simulate_point(p, &mut rng)?);
    }

    Ok(SyntheticDataset { config: config.clone(), calibration, fingerprints, tests })
}

/// Approximate replicas of the three evaluated rooms.
///
/// Room sizes, fingerprint counts and the first room's 4 m right-angle
/// anchor triangle follow the measured setups; the remaining anchor
/// coordinates are plausible placements. Path-loss parameters are the
/// Zigbee fits for each room. `sigma_db` sets both the shadowing and the
/// fading standard deviation.
pub mod replica {
    use super::*;
    use crate::types::{Anchor, AnchorId};

    pub const DEFAULT_SIGMAS: [f64; 3] = [2.0, 4.0, 3.0];
    pub const SHADOWING_CORR_M: f64 = 1.5;

    fn anchors(points: &[(f64, f64)]) -> AnchorSet {
        AnchorSet::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    Anchor::new(AnchorId::new(format!("T{}", i + 1)).unwrap(), Position::new(x, y).unwrap())
                })
                .collect(),
        )
        .unwrap()
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        scenario: usize,
        room: (f64, f64),
        anchor_pts: &[(f64, f64)],
        model: (f64, f64),
        layout: LayoutKind,
        region: Region,
        spacing: f64,
        sigma: f64,
        seed: u64,
    ) -> ScenarioConfig {
        let m = PathLossModel::new(model.0, model.1).unwrap();
        ScenarioConfig {
            name: format!("scenario-{scenario}"),
            technology: "zigbee".into(),
            width_m: room.0,
            height_m: room.1,
            anchors: anchors(anchor_pts),
            models: vec![m; anchor_pts.len()],
            shadowing_sigma_db: sigma,
            shadowing_corr_m: SHADOWING_CORR_M,
            fading_sigma_db: sigma,
            layout,
            region,
            spacing_m: spacing,
            scans_per_point: 100,
            test_points: 100,
            seed,
        }
    }

    /// 6 × 5.5 m meeting room, low interference, 49 fingerprints on a 0.5 m grid.
    pub fn scenario1(sigma: f64, seed: u64) -> ScenarioConfig {
        build(
            1,
            (6.0, 5.5),
            &[(1.0, 1.0), (5.0, 1.0), (1.0, 5.0)],
            (2.935, -50.33),
            LayoutKind::DenseGrid,
            Region { x0: 1.5, y0: 1.5, x1: 4.5, y1: 4.5 },
            0.5,
            sigma,
            seed,
        )
    }

    /// 5.8 × 5.3 m meeting room, high interference, 16 sparse fingerprints.
    pub fn scenario2(sigma: f64, seed: u64) -> ScenarioConfig {
        build(
            2,
            (5.8, 5.3),
            &[(0.5, 0.5), (5.3, 0.5), (2.9, 4.9)],
            (1.912, -52.73),
            LayoutKind::SparseGrid,
            Region { x0: 1.1, y0: 1.0, x1: 4.7, y1: 4.6 },
            1.2,
            sigma,
            seed,
        )
    }

    /// 10.8 × 7.3 m laboratory, average interference, 40 fingerprints in an
    /// alternating pattern.
    pub fn scenario3(sigma: f64, seed: u64) -> ScenarioConfig {
        build(
            3,
            (10.8, 7.3),
            &[(1.0, 1.0), (10.3, 1.0), (5.4, 6.8)],
            (2.085, -48.52),
            LayoutKind::Alternating,
            Region { x0: 2.0, y0: 1.5, x1: 9.5, y1: 5.5 },
            1.0,
            sigma,
            seed,
        )
    }

    /// Replica `n` (1, 2 or 3) at its default noise level.
    pub fn by_number(n: usize, seed: u64) -> Option<ScenarioConfig> {
        match n {
            1 => Some(scenario1(DEFAULT_SIGMAS[0], seed)),
            2 => Some(scenario2(DEFAULT_SIGMAS[1], seed)),
            3 => Some(scenario3(DEFAULT_SIGMAS[2], seed)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathloss::predict_rssi;

    #[test]
    fn replica_fingerprint_counts() {
        assert_eq!(replica::scenario1(2.0, 1).fingerprint_positions().unwrap().len(), 49);
        assert_eq!(replica::scenario2(4.0, 1).fingerprint_positions().unwrap().len(), 16);
        assert_eq!(replica::scenario3(3.0, 1).fingerprint_positions().unwrap().len(), 40);
        for n in 1..=3 {
            replica::by_number(n, 0).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn scenario1_anchor_triangle() {
        let cfg = replica::scenario1(2.0, 1);
        let a: Vec<Position> = cfg.anchors.iter().map(|a| a.position).collect();
        assert_eq!(a[0].distance_to(&a[1]), 4.0);
        assert_eq!(a[0].distance_to(&a[2]), 4.0);
    }

    #[test]
    fn alternating_rows_are_offset() {
        let pts = replica::scenario3(3.0, 1).fingerprint_positions().unwrap();
        assert_eq!(pts[0].x(), 2.0);
        assert_eq!(pts[8].x(), 2.5);
        assert_eq!(pts[8].y(), 2.5);
    }

    #[test]
    fn sample_rssi_zero_sigma_is_prediction() {
        let m = PathLossModel::new(2.935, -50.33).unwrap();
        let mut rng = SimRng::seed_from_u64(5);
        for d in [0.3, 1.0, 2.7, 8.0] {
            assert_eq!(sample_rssi(&m, d, 0.0, &mut rng).unwrap(), predict_rssi(&m, d).unwrap());
        }
        assert!(matches!(
            sample_rssi(&m, 0.0, 1.0, &mut rng),
            Err(SynthError::PathLoss(PathLossError::NonPositiveDistance(_)))
        ));
    }

    #[test]
    fn sample_rssi_deterministic_and_calibrated() {
        let m = PathLossModel::new(2.0, -50.0).unwrap();
        let draw = |seed| {
            let mut rng = SimRng::seed_from_u64(seed);
            (0..10_000).map(|_| sample_rssi(&m, 3.0, 3.0, &mut rng).unwrap().dbm()).collect::<Vec<_>>()
        };
        let a = draw(11);
        assert_eq!(a, draw(11));
        let pred = m.rssi_at(3.0);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        assert!((mean - pred).abs() < 0.1, "{mean} vs {pred}");
        assert!((std - 3.0).abs() < 0.1, "{std}");
    }

    #[test]
    fn generation_is_deterministic_and_in_room() {
        let mut cfg = replica::scenario2(4.0, 77);
        cfg.test_points = 10;
        cfg.scans_per_point = 5;
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprints.len(), 16);
        assert_eq!(a.tests.len(), 10);
        assert_eq!(a.calibration.len(), 18);
        for p in a.fingerprints.iter().chain(&a.tests) {
            assert!((0.0..=cfg.width_m).contains(&p.position.x()));
            assert!((0.0..=cfg.height_m).contains(&p.position.y()));
            assert_eq!(p.scans.len(), 5);
        }
        cfg.seed = 78;
        assert_ne!(generate_scenario(&cfg).unwrap(), a);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = replica::scenario1(2.0, 1);
        cfg.width_m = 3.0;
        assert!(matches!(generate_scenario(&cfg), Err(SynthError::ConfigInvalid(_))));
        let mut cfg = replica::scenario1(2.0, 1);
        cfg.spacing_m = 0.0;
        assert!(matches!(generate_scenario(&cfg), Err(SynthError::ConfigInvalid(_))));
        let mut cfg = replica::scenario1(2.0, 1);
        cfg.fading_sigma_db = -1.0;
        assert!(matches!(generate_scenario(&cfg), Err(SynthError::ConfigInvalid(_))));
        let mut cfg = replica::scenario1(2.0, 1);
        cfg.region = Region { x0: 1.0, y0: 1.0, x1: 4.0, y1: 4.0 };
        assert!(matches!(generate_scenario(&cfg), Err(SynthError::ConfigInvalid(_))));
    }
}
