//! Model-based localization.
//!
//! RSSI streams are smoothed per anchor with a scalar Kalman filter, turned
//! into ranges with the anchor's path-loss model and solved by linearized
//! least squares: subtracting the reference anchor's circle equation from every
//! other one leaves a linear system in `(x, y)`.

use thiserror::Error;

use crate::pathloss::{invert_distance, ModelTable};
use crate::types::{Anchor, AnchorSet, CoreError, Position, Rssi, ScanVector};

/// Relative singularity threshold on the 2x2 normal matrix:
/// `det(AᵀA) <= DEGENERACY_THRESHOLD * trace(AᵀA)²` means the anchors are
/// (numerically) collinear.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrilatError {
    #[error("empty RSSI sequence")]
    EmptySequence,
    #[error("need at least 3 ranged anchors, have {0}")]
    TooFewAnchors(usize),
    #[error("anchor geometry is degenerate (collinear anchors)")]
    DegenerateGeometry,
    #[error("range must be finite and > 0 m, got {0}")]
    InvalidRange(f64),
    #[error("Kalman parameter {name} must be finite and > 0, got {value}")]
    InvalidKalmanParam { name: &'static str, value: f64 },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Noise settings of the scalar RSSI filter, all in dB².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    process_noise_q: f64,
    measurement_noise_r: f64,
    initial_variance_p0: f64,
}

impl KalmanParams {
    pub const DEFAULT_Q: f64 = 0.008;
    pub const DEFAULT_R: f64 = 4.0;
    pub const DEFAULT_P0: f64 = 1.0;

    pub fn new(q: f64, r: f64, p0: f64) -> Result<Self, TrilatError> {
        for (name, value) in [("q", q), ("r", r), ("p0", p0)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(TrilatError::InvalidKalmanParam { name, value });
            }
        }
        Ok(Self { process_noise_q: q, measurement_noise_r: r, initial_variance_p0: p0 })
    }

    pub fn q(&self) -> f64 {
        self.process_noise_q
    }

    pub fn r(&self) -> f64 {
        self.measurement_noise_r
    }

    pub fn p0(&self) -> f64 {
        self.initial_variance_p0
    }
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_noise_q: Self::DEFAULT_Q,
            measurement_noise_r: Self::DEFAULT_R,
            initial_variance_p0: Self::DEFAULT_P0,
        }
    }
}

/// Constant-state scalar Kalman filter over one RSSI stream.
#[derive(Debug, Clone)]
pub struct RssiKalman {
    params: KalmanParams,
    state: Option<(f64, f64)>,
}

impl RssiKalman {
    pub fn new(params: KalmanParams) -> Self {
        Self { params, state: None }
    }

    /// Feeds one reading and returns the filtered estimate.
    pub fn update(&mut self, reading: Rssi) -> Rssi {
        let z = reading.dbm();
        let (x, p) = match self.state {
            None => (z, self.params.p0()),
            Some((x, p)) => {
                let p_pred = p + self.params.q();
                let gain = p_pred / (p_pred + self.params.r());
                (x + gain * (z - x), (1.0 - gain) * p_pred)
            }
        };
        self.state = Some((x, p));
        // x is a convex combination of valid readings.
        Rssi::saturating(x).expect("filter state is finite")
    }

    pub fn variance(&self) -> Option<f64> {
        self.state.map(|(_, p)| p)
    }
}

/// Filters a whole stream; output `k` depends on readings `0..=k` only.
pub fn kalman_smooth(readings: &[Rssi], params: &KalmanParams) -> Result<Vec<Rssi>, TrilatError> {
    if readings.is_empty() {
        return Err(TrilatError::EmptySequence);
    }
    let mut filter = RssiKalman::new(*params);
    Ok(readings.iter().map(|&r| filter.update(r)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangedAnchor {
    pub anchor: Anchor,
    distance: f64,
}

impl RangedAnchor {
    pub fn new(anchor: Anchor, distance: f64) -> Result<Self, TrilatError> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(TrilatError::InvalidRange(distance));
        }
        Ok(Self { anchor, distance })
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }
}

/// Linear least-squares multilateration with the first entry as the
/// linearization reference. Works in coordinates relative to that anchor so
/// the result is translation-equivariant up to rounding.
pub fn trilaterate(ranges: &[RangedAnchor]) -> Result<Position, TrilatError> {
    if ranges.len() < 3 {
        return Err(TrilatError::TooFewAnchors(ranges.len()));
    }
    let reference = &ranges[0];
    let (x0, y0) = (reference.anchor.position.x(), reference.anchor.position.y());
    let d0_sq = reference.distance * reference.distance;

    // Rows: 2u·x + 2v·y = d0² − di² + u² + v², with (u, v) relative to the reference.
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &ranges[1..] {
        let u = r.anchor.position.x() - x0;
        let v = r.anchor.position.y() - y0;
        let rhs = d0_sq - r.distance * r.distance + u * u + v * v;
        let (cu, cv) = (2.0 * u, 2.0 * v);
        a11 += cu * cu;
        a12 += cu * cv;
        a22 += cv * cv;
        b1 += cu * rhs;
        b2 += cv * rhs;
    }

    let det = a11 * a22 - a12 * a12;
    let trace = a11 + a22;
    if trace.is_nan() || trace <= 0.0 || det <= DEGENERACY_THRESHOLD * trace * trace {
        return Err(TrilatError::DegenerateGeometry);
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let y = (a11 * b2 - a12 * b1) / det;
    Ok(Position::new(x0 + x, y0 + y)?)
}

/// Converts each heard anchor's RSSI to a range and trilaterates.
///
/// Anchors are taken in `anchors` insertion order; those missing from the
/// scan or without a model are skipped.
pub fn locate_trilateration(
    scan: &ScanVector,
    anchors: &AnchorSet,
    models: &ModelTable,
) -> Result<Position, TrilatError> {
    scan.check_against(anchors)?;
    let ranges = anchors
        .iter()
        .filter_map(|anchor| {
            let rssi = scan.get(&anchor.id)?;
            let model = models.get(&anchor.id)?;
            Some(RangedAnchor::new(anchor.clone(), invert_distance(model, rssi)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    trilaterate(&ranges)
}
