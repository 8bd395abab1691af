//! Artifact writers: CSV with 17 significant digits, JSON with an isolated
//! timestamp, binary PGM heatmaps.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::domain::{CoupledField, NodeKind};
use crate::error::{Error, Result};

/// Key holding the wall-clock time in emitted JSON; the only nondeterministic field.
pub const TIMESTAMP_KEY: &str = "generated_at";

/// Gray level for grid cells outside the domain.
pub const EXTERIOR_GRAY: u8 = 128;

/// `v` with 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes a header and rows of preformatted cells.
pub fn write_csv_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header and numeric rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()).collect();
    write_csv_records(path, header, &rows)
}

/// Reads a numeric CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| Error::Io(format!("bad number '{c}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Serializes `value` (which must be a JSON object) with the timestamp key
/// added. Keys are emitted in sorted order.
pub fn to_json_with_timestamp<T: Serialize>(value: &T, timestamp: Option<u64>) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    let obj = v.as_object_mut().ok_or_else(|| Error::Io("report is not a JSON object".into()))?;
    let ts = timestamp.unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    obj.insert(TIMESTAMP_KEY.into(), ts.into());
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_with_timestamp(value, None)?)?;
    Ok(())
}

/// Binary 8-bit PGM (P5).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Io(format!("{} pixels for a {width}x{height} image", pixels.len())));
    }
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(pixels);
    fs::write(path, buf)?;
    Ok(())
}

/// Grayscale image of one mode over the lattice bounding grid: linear map
/// from the mode's value range to 0..=255, exterior nodes mid-gray, top row
/// = largest `y`.
pub fn heatmap(field: &CoupledField, mode: usize) -> (usize, usize, Vec<u8>) {
    let lat = field.lattice();
    let [w, h] = lat.shape();
    let vals = field.values(mode);
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = hi - lo;
    let mut px = vec![EXTERIOR_GRAY; w * h];
    for j in 0..h {
        for i in 0..w {
            let g = j * w + i;
            if lat.kind(g) == NodeKind::Ghost {
                continue;
            }
            let v = vals[lat.slot(g).expect("interior node has a slot")];
            let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
            px[(h - 1 - j) * w + i] = (t * 255.0).round() as u8;
        }
    }
    (w, h, px)
}
