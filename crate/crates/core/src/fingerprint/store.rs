//! Plain-text database format.
//!
//! ```text
//! rssi-locus-db v1
//! anchor,<id>,<x>,<y>                          one line per anchor
//! <x>,<y>,<id>:<mean>:<variance>:<count>,...   one line per fingerprint
//! ```
//!
//! Reals are written with 17 significant digits, so `read(write(db)) == db`
//! bit for bit.

use std::io::{BufRead, Write};

use crate::numfmt::sig17;
use crate::types::{Anchor, AnchorId, AnchorSet, Position};

use super::{AnchorStats, Fingerprint, FingerprintDatabase, FingerprintError};

pub const DB_HEADER: &str = "rssi-locus-db v1";

pub fn write_database<W: Write>(mut w: W, db: &FingerprintDatabase) -> std::io::Result<()> {
    writeln!(w, "{DB_HEADER}")?;
    for a in db.anchors() {
        writeln!(w, "anchor,{},{},{}", a.id, sig17(a.position.x()), sig17(a.position.y()))?;
    }
    for fp in db.fingerprints() {
        let p = fp.position();
        write!(w, "{},{}", sig17(p.x()), sig17(p.y()))?;
        for (id, st) in fp.iter() {
            write!(w, ",{}:{}:{}:{}", id, sig17(st.mean()), sig17(st.variance()), st.sample_count())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_database<R: BufRead>(reader: R) -> Result<FingerprintDatabase, FingerprintError> {
    let mut anchors = Vec::new();
    let mut fingerprints = Vec::new();
    let mut saw_header = false;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        let err = |reason: String| FingerprintError::Parse { line: line_no, reason };

        if !saw_header {
            if line != DB_HEADER {
                return Err(err(format!("expected header `{DB_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }

        let fields: Vec<&str> = line.split(',').collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
        let position = |xs: &str, ys: &str| Position::new(num(xs)?, num(ys)?).map_err(|e| err(e.to_string()));

        if fields[0] == "anchor" {
            if !fingerprints.is_empty() {
                return Err(err("anchor lines must precede fingerprint lines".into()));
            }
            if fields.len() != 4 {
                return Err(err(format!("anchor line needs 4 fields, got {}", fields.len())));
            }
            let id = AnchorId::new(fields[1]).map_err(|e| err(e.to_string()))?;
            anchors.push(Anchor::new(id, position(fields[2], fields[3])?));
            continue;
        }

        if fields.len() < 3 {
            return Err(err("fingerprint line needs a position and at least one anchor entry".into()));
        }
        let pos = position(fields[0], fields[1])?;
        let mut stats = Vec::with_capacity(fields.len() - 2);
        for entry in &fields[2..] {
            let parts: Vec<&str> = entry.split(':').collect();
            if parts.len() != 4 {
                return Err(err(format!("bad anchor entry `{entry}`")));
            }
            let id = AnchorId::new(parts[0]).map_err(|e| err(e.to_string()))?;
            let count: u64 = parts[3].parse().map_err(|_| err(format!("bad count `{}`", parts[3])))?;
            let st = AnchorStats::new(num(parts[1])?, num(parts[2])?, count).map_err(|e| err(e.to_string()))?;
            stats.push((id, st));
        }
        fingerprints.push(Fingerprint::new(pos, stats).map_err(|e| err(e.to_string()))?);
    }

    if !saw_header {
        return Err(FingerprintError::Parse { line: 1, reason: "empty file".into() });
    }
    let anchors = AnchorSet::new(anchors)?;
    FingerprintDatabase::new(anchors, fingerprints)
}
