//! Flat `key = value` scenario files.
//!
//! ```text
//! # comments and blank lines are ignored
//! name = scenario-1
//! technology = zigbee
//! width_m = 6
//! height_m = 5.5
//! anchor = T1 1 1 2.935 -50.33     # id x y exponent intercept, repeatable
//! shadowing_sigma_db = 2
//! shadowing_corr_m = 1.5
//! fading_sigma_db = 2
//! layout = dense-grid              # dense-grid | sparse-grid | alternating
//! region = 1.5 1.5 4.5 4.5         # x0 y0 x1 y1
//! spacing_m = 0.5
//! scans_per_point = 100
//! test_points = 100
//! seed = 42
//! ```
//!
//! Every key except `anchor` must appear exactly once; unknown keys are
//! errors.

use std::io::{BufRead, Write};

use crate::pathloss::PathLossModel;
use crate::types::{Anchor, AnchorId, AnchorSet, Position};

use super::{LayoutKind, Region, ScenarioConfig, SynthError};

const KEYS: [&str; 14] = [
    "name",
    "technology",
    "width_m",
    "height_m",
    "shadowing_sigma_db",
    "shadowing_corr_m",
    "fading_sigma_db",
    "layout",
    "region",
    "spacing_m",
    "scans_per_point",
    "test_points",
    "seed",
    "anchor",
];

pub fn parse_config<R: BufRead>(reader: R) -> Result<ScenarioConfig, SynthError> {
    let mut values: Vec<(&'static str, usize, String)> = Vec::new();
    let mut anchors = Vec::new();
    let mut models = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| SynthError::Parse { line: line_no, reason: e.to_string() })?;
        let err = |reason: String| SynthError::Parse { line: line_no, reason };
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let key = *KEYS.iter().find(|k| **k == key).ok_or_else(|| err(format!("unknown key `{key}`")))?;

        if key == "anchor" {
            let f: Vec<&str> = value.split_whitespace().collect();
            if f.len() != 5 {
                return Err(err("anchor needs `id x y exponent intercept`".into()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            let id = AnchorId::new(f[0]).map_err(|e| err(e.to_string()))?;
            let pos = Position::new(num(f[1])?, num(f[2])?).map_err(|e| err(e.to_string()))?;
            anchors.push(Anchor::new(id, pos));
            models.push(PathLossModel::new(num(f[3])?, num(f[4])?).map_err(|e| err(e.to_string()))?);
            continue;
        }
        if values.iter().any(|(k, _, _)| *k == key) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        values.push((key, line_no, value.to_string()));
    }

    let get = |key: &str| -> Result<(usize, &str), SynthError> {
        values
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, l, v)| (*l, v.as_str()))
            .ok_or_else(|| SynthError::ConfigInvalid(format!("missing key `{key}`")))
    };
    fn parse<T: std::str::FromStr>(key: &str, (line, v): (usize, &str)) -> Result<T, SynthError> {
        v.parse().map_err(|_| SynthError::Parse { line, reason: format!("bad value `{v}` for `{key}`") })
    }
    let f = |key: &str| -> Result<f64, SynthError> { parse(key, get(key)?) };

    let (layout_line, layout) = get("layout")?;
    let layout = LayoutKind::parse(layout)
        .ok_or_else(|| SynthError::Parse { line: layout_line, reason: format!("unknown layout `{layout}`") })?;
    let (region_line, region_text) = get("region")?;
    let r: Vec<f64> = region_text
        .split_whitespace()
        .map(|s| parse("region", (region_line, s)))
        .collect::<Result<_, _>>()?;
    if r.len() != 4 {
        return Err(SynthError::Parse { line: region_line, reason: "region needs `x0 y0 x1 y1`".into() });
    }

    let config = ScenarioConfig {
        name: get("name")?.1.to_string(),
        technology: get("technology")?.1.to_string(),
        width_m: f("width_m")?,
        height_m: f("height_m")?,
        anchors: AnchorSet::new(anchors).map_err(|e| SynthError::ConfigInvalid(e.to_string()))?,
        models,
        shadowing_sigma_db: f("shadowing_sigma_db")?,
        shadowing_corr_m: f("shadowing_corr_m")?,
        fading_sigma_db: f("fading_sigma_db")?,
        layout,
        region: Region { x0: r[0], y0: r[1], x1: r[2], y1: r[3] },
        spacing_m: f("spacing_m")?,
        scans_per_point: parse("scans_per_point", get("scans_per_point")?)?,
        test_points: parse("test_points", get("test_points")?)?,
        seed: parse("seed", get("seed")?)?,
    };
    config.validate()?;
    Ok(config)
}

pub fn write_config<W: Write>(mut w: W, c: &ScenarioConfig) -> std::io::Result<()> {
    writeln!(w, "name = {}", c.name)?;
    writeln!(w, "technology = {}", c.technology)?;
    writeln!(w, "width_m = {}", c.width_m)?;
    writeln!(w, "height_m = {}", c.height_m)?;
    for (a, m) in c.anchors.iter().zip(&c.models) {
        writeln!(w, "anchor = {} {} {} {} {}", a.id, a.position.x(), a.position.y(), m.exponent(), m.intercept())?;
    }
    writeln!(w, "shadowing_sigma_db = {}", c.shadowing_sigma_db)?;
    writeln!(w, "shadowing_corr_m = {}", c.shadowing_corr_m)?;
    writeln!(w, "fading_sigma_db = {}", c.fading_sigma_db)?;
    writeln!(w, "layout = {}", c.layout.as_str())?;
    writeln!(w, "region = {} {} {} {}", c.region.x0, c.region.y0, c.region.x1, c.region.y1)?;
    writeln!(w, "spacing_m = {}", c.spacing_m)?;
    writeln!(w, "scans_per_point = {}", c.scans_per_point)?;
    writeln!(w, "test_points = {}", c.test_points)?;
    writeln!(w, "seed = {}", c.seed)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::replica;
    use super::*;

    #[test]
    fn replicas_round_trip() {
        for n in 1..=3 {
            let cfg = replica::by_number(n, 42).unwrap();
            let mut buf = Vec::new();
            write_config(&mut buf, &cfg).unwrap();
            assert_eq!(parse_config(buf.as_slice()).unwrap(), cfg);
        }
    }

    #[test]
    fn rejects_unknown_duplicate_and_missing_keys() {
        let mut buf = Vec::new();
        write_config(&mut buf, &replica::scenario1(2.0, 1)).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let unknown = format!("{text}colour = red\n");
        assert!(matches!(parse_config(unknown.as_bytes()), Err(SynthError::Parse { .. })));
        let dup = format!("{text}seed = 3\n");
        assert!(matches!(parse_config(dup.as_bytes()), Err(SynthError::Parse { .. })));
        let missing: String = text.lines().filter(|l| !l.starts_with("seed")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_config(missing.as_bytes()), Err(SynthError::ConfigInvalid(_))));
        let bad_layout = text.replace("dense-grid", "spiral");
        assert!(matches!(parse_config(bad_layout.as_bytes()), Err(SynthError::Parse { .. })));
        let outside = text.replace("anchor = T1 1 1", "anchor = T1 9 1");
        assert!(matches!(parse_config(outside.as_bytes()), Err(SynthError::ConfigInvalid(_))));
    }

    #[test]
    fn comments_are_ignored() {
        let mut buf = Vec::new();
        write_config(&mut buf, &replica::scenario2(4.0, 9)).unwrap();
        let text = format!("# header\n\n{}", String::from_utf8(buf).unwrap().replace("seed = 9", "seed = 9 # fixed"));
        assert_eq!(parse_config(text.as_bytes()).unwrap().seed, 9);
    }
}
