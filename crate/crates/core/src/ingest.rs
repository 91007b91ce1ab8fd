//! Raw scan logs and their preprocessing.
//!
//! The canonical log is a CSV with header `seq,anchor_id,rssi_dbm,x_m,y_m,tech`.
//! `seq` numbers scans: rows sharing a `seq` at one position were read in the
//! same sweep across anchors. `x_m,y_m` are blank for unlabeled test-time
//! scans, and `tech` may be blank. Any other header is rejected.

use std::io::{Read, Write};

use thiserror::Error;

use crate::fingerprint::Survey;
use crate::trilat::{KalmanParams, RssiKalman};
use crate::types::{Anchor, AnchorId, AnchorSet, CoreError, Position, Rssi, ScanVector};

pub const SCAN_HEADER: [&str; 6] = ["seq", "anchor_id", "rssi_dbm", "x_m", "y_m", "tech"];
pub const ANCHORS_HEADER: [&str; 3] = ["anchor_id", "x_m", "y_m"];
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: invalid RSSI `{value}`")]
    InvalidRssi { line: u64, value: String },
    #[error("unrecognized columns `{found}`, expected `{expected}`")]
    UnknownColumns { found: String, expected: String },
    #[error("empty input (no header)")]
    EmptyInput,
    #[error("record seq {seq} for anchor {anchor} has no position label")]
    MissingPositionLabel { seq: u64, anchor: AnchorId },
    #[error("scan seq {seq} lists anchor {anchor} more than once")]
    DuplicateReading { seq: u64, anchor: AnchorId },
    #[error("empty RSSI series")]
    EmptySeries,
    #[error("moving-average window must be >= 1")]
    InvalidWindow,
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawScanRecord {
    pub seq: u64,
    pub anchor_id: AnchorId,
    pub rssi: Rssi,
    pub position: Option<Position>,
    pub technology: Option<String>,
}

fn csv_line(pos: Option<&csv::Position>) -> u64 {
    pos.map(|p| p.line()).unwrap_or(0)
}

fn map_csv_err(e: csv::Error) -> IngestError {
    let line = csv_line(e.position());
    match e.kind() {
        csv::ErrorKind::Io(_) => IngestError::Io(e.to_string()),
        _ => IngestError::MalformedRow { line, reason: e.to_string() },
    }
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let found: Vec<&str> = record.iter().map(str::trim).collect();
    if found != expected {
        return Err(IngestError::UnknownColumns { found: found.join(","), expected: expected.join(",") });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input)
}

/// Parses a canonical scan log. Every row either parses or produces an error
/// naming its line; nothing is dropped.
pub fn parse_scan_log<R: Read>(input: R) -> Result<Vec<RawScanRecord>, IngestError> {
    let mut rdr = reader(input);
    let mut rows = rdr.records();
    let header = rows.next().ok_or(IngestError::EmptyInput)?.map_err(map_csv_err)?;
    check_header(&header, &SCAN_HEADER)?;

    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(map_csv_err)?;
        let line = csv_line(row.position());
        let malformed = |reason: String| IngestError::MalformedRow { line, reason };
        if row.len() != SCAN_HEADER.len() {
            if row.len() == 1 && row[0].is_empty() {
                continue;
            }
            return Err(malformed(format!("expected {} fields, got {}", SCAN_HEADER.len(), row.len())));
        }
        let seq: u64 = row[0].parse().map_err(|_| malformed(format!("bad seq `{}`", &row[0])))?;
        let anchor_id = AnchorId::new(&row[1]).map_err(|e| malformed(e.to_string()))?;
        let rssi = row[2]
            .parse::<f64>()
            .ok()
            .and_then(|v| Rssi::new(v).ok())
            .ok_or_else(|| IngestError::InvalidRssi { line, value: row[2].to_string() })?;
        let position = match (&row[3], &row[4]) {
            ("", "") => None,
            (x, y) => {
                let x: f64 = x.parse().map_err(|_| malformed(format!("bad x `{x}`")))?;
                let y: f64 = y.parse().map_err(|_| malformed(format!("bad y `{y}`")))?;
                Some(Position::new(x, y).map_err(|e| malformed(e.to_string()))?)
            }
        };
        let technology = (!row[5].is_empty()).then(|| row[5].to_string());
        out.push(RawScanRecord { seq, anchor_id, rssi, position, technology });
    }
    Ok(out)
}

pub fn write_scan_log<W: Write>(mut w: W, records: &[RawScanRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", SCAN_HEADER.join(","))?;
    for r in records {
        let (x, y) = match r.position {
            Some(p) => (p.x().to_string(), p.y().to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.seq,
            r.anchor_id,
            r.rssi.dbm(),
            x,
            y,
            r.technology.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

pub fn read_anchors_csv<R: Read>(input: R) -> Result<AnchorSet, IngestError> {
    let mut rdr = reader(input);
    let mut rows = rdr.records();
    let header = rows.next().ok_or(IngestError::EmptyInput)?.map_err(map_csv_err)?;
    check_header(&header, &ANCHORS_HEADER)?;
    let mut anchors = Vec::new();
    for row in rows {
        let row = row.map_err(map_csv_err)?;
        let line = csv_line(row.position());
        let malformed = |reason: String| IngestError::MalformedRow { line, reason };
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 3 {
            return Err(malformed(format!("expected 3 fields, got {}", row.len())));
        }
        let id = AnchorId::new(&row[0]).map_err(|e| malformed(e.to_string()))?;
        let x: f64 = row[1].parse().map_err(|_| malformed(format!("bad x `{}`", &row[1])))?;
        let y: f64 = row[2].parse().map_err(|_| malformed(format!("bad y `{}`", &row[2])))?;
        anchors.push(Anchor::new(id, Position::new(x, y).map_err(|e| malformed(e.to_string()))?));
    }
    Ok(AnchorSet::new(anchors)?)
}

pub fn write_anchors_csv<W: Write>(mut w: W, anchors: &AnchorSet) -> std::io::Result<()> {
    writeln!(w, "{}", ANCHORS_HEADER.join(","))?;
    for a in anchors {
        writeln!(w, "{},{},{}", a.id, a.position.x(), a.position.y())?;
    }
    Ok(())
}

/// Trailing moving average; the first `window - 1` outputs average over the
/// readings available so far.
pub fn moving_average(series: &[Rssi], window: usize) -> Result<Vec<Rssi>, IngestError> {
    if window == 0 {
        return Err(IngestError::InvalidWindow);
    }
    if series.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    let values: Vec<f64> = series.iter().map(|r| r.dbm()).collect();
    values
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let slice = &values[(i + 1).saturating_sub(window)..=i];
            let mean = slice.iter().sum::<f64>() / slice.len() as f64;
            // A mean of in-range values can only leave the range by rounding.
            Ok(Rssi::saturating(mean)?)
        })
        .collect()
}

/// How an anchor's reading stream at one point collapses to a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduction {
    /// Last output of a trailing moving average.
    MovingAverage { window: usize },
    /// Plain mean of every reading.
    Mean,
    /// Terminal estimate of the scalar Kalman filter.
    Kalman(KalmanParams),
}

impl Reduction {
    pub fn reduce(&self, series: &[Rssi]) -> Result<Rssi, IngestError> {
        if series.is_empty() {
            return Err(IngestError::EmptySeries);
        }
        match self {
            Reduction::MovingAverage { window } => {
                Ok(*moving_average(series, *window)?.last().expect("non-empty"))
            }
            Reduction::Mean => {
                let mean = series.iter().map(|r| r.dbm()).sum::<f64>() / series.len() as f64;
                Ok(Rssi::saturating(mean)?)
            }
            Reduction::Kalman(params) => {
                let mut filter = RssiKalman::new(*params);
                Ok(series.iter().map(|&r| filter.update(r)).last().expect("non-empty"))
            }
        }
    }
}

/// Records of one labeled point, grouped per anchor.
struct PointStreams<'a> {
    position: Position,
    /// Anchors in order of first appearance; each stream sorted by `seq`.
    anchors: Vec<(AnchorId, Vec<&'a RawScanRecord>)>,
}

fn group_by_position(records: &[RawScanRecord]) -> Result<Vec<PointStreams<'_>>, IngestError> {
    let mut points: Vec<PointStreams<'_>> = Vec::new();
    for r in records {
        let position = r
            .position
            .ok_or_else(|| IngestError::MissingPositionLabel { seq: r.seq, anchor: r.anchor_id.clone() })?;
        let idx = match points.iter().position(|p| p.position == position) {
            Some(i) => i,
            None => {
                points.push(PointStreams { position, anchors: Vec::new() });
                points.len() - 1
            }
        };
        let point = &mut points[idx];
        match point.anchors.iter_mut().find(|(id, _)| *id == r.anchor_id) {
            Some((_, stream)) => stream.push(r),
            None => point.anchors.push((r.anchor_id.clone(), vec![r])),
        }
    }
    for p in &mut points {
        for (_, stream) in &mut p.anchors {
            // Stable, so equal seq keeps file order.
            stream.sort_by_key(|r| r.seq);
        }
        p.anchors.sort_by(|a, b| a.0.cmp(&b.0));
    }
    Ok(points)
}

/// One `ScanVector` per labeled position, each anchor reduced to one value.
///
/// Positions appear in order of first appearance. Only the per-anchor order
/// of readings (by `seq`) matters, not how anchors are interleaved.
pub fn aggregate_scans(records: &[RawScanRecord], reduction: Reduction) -> Result<Vec<(Position, ScanVector)>, IngestError> {
    group_by_position(records)?
        .into_iter()
        .map(|point| {
            let entries = point
                .anchors
                .iter()
                .map(|(id, stream)| {
                    let series: Vec<Rssi> = stream.iter().map(|r| r.rssi).collect();
                    Ok((id.clone(), reduction.reduce(&series)?))
                })
                .collect::<Result<Vec<_>, IngestError>>()?;
            Ok((point.position, ScanVector::new(entries)?))
        })
        .collect()
}

/// Surveys for [`crate::fingerprint::build_database`]: every anchor stream is
/// smoothed with a trailing moving average, then readings sharing a `seq`
/// form one scan. `window = 1` keeps the raw readings.
pub fn survey_scans(records: &[RawScanRecord], window: usize) -> Result<Vec<Survey>, IngestError> {
    group_by_position(records)?
        .into_iter()
        .map(|point| {
            // (seq, anchor, smoothed) triples, then grouped by seq.
            let mut smoothed: Vec<(u64, AnchorId, Rssi)> = Vec::new();
            for (id, stream) in &point.anchors {
                let series: Vec<Rssi> = stream.iter().map(|r| r.rssi).collect();
                for (r, s) in stream.iter().zip(moving_average(&series, window)?) {
                    smoothed.push((r.seq, id.clone(), s));
                }
            }
            smoothed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            let scans = group_by_seq(smoothed)?;
            Ok(Survey { position: point.position, scans: scans.into_iter().map(|(_, s)| s).collect() })
        })
        .collect()
}

fn group_by_seq(sorted: Vec<(u64, AnchorId, Rssi)>) -> Result<Vec<(u64, ScanVector)>, IngestError> {
    let mut out: Vec<(u64, Vec<(AnchorId, Rssi)>)> = Vec::new();
    for (seq, id, rssi) in sorted {
        match out.last_mut() {
            Some((s, entries)) if *s == seq => {
                if entries.iter().any(|(k, _)| *k == id) {
                    return Err(IngestError::DuplicateReading { seq, anchor: id });
                }
                entries.push((id, rssi));
            }
            _ => out.push((seq, vec![(id, rssi)])),
        }
    }
    out.into_iter().map(|(seq, e)| Ok((seq, ScanVector::new(e)?))).collect()
}

/// Unlabeled records as individual scans, one per `seq`, in `seq` order.
/// Labeled records are ignored.
pub fn unlabeled_scans(records: &[RawScanRecord]) -> Result<Vec<(u64, ScanVector)>, IngestError> {
    let mut rows: Vec<(u64, AnchorId, Rssi)> = records
        .iter()
        .filter(|r| r.position.is_none())
        .map(|r| (r.seq, r.anchor_id.clone(), r.rssi))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    group_by_seq(rows)
}

/// First non-empty technology label, if any.
pub fn technology_label(records: &[RawScanRecord]) -> Option<String> {
    records.iter().find_map(|r| r.technology.clone())
}
