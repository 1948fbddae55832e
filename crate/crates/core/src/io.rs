//! Output helpers: CSV tables, field snapshots (flat little-endian f64 with a
//! JSON header sidecar) and run summaries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::derham::TensorSpace;
use crate::error::{Error, Result};

/// Sidecar describing a snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub field: String,
    /// "V1", "V2", ...
    pub space: String,
    /// per component: coefficient array shape, row-major (x slowest)
    pub shapes: Vec<[usize; 3]>,
    pub time: f64,
    /// "real" or "complex"; complex files hold all real parts, then all imaginary parts
    pub layout: String,
    pub dtype: String,
    pub len: usize,
}

impl SnapshotHeader {
    pub fn new(field: &str, space: &TensorSpace, time: f64, complex: bool) -> Self {
        let shapes = (0..space.n_components()).map(|c| space.component_shape(c)).collect();
        SnapshotHeader {
            field: field.into(),
            space: format!("V{}", space.form_degree()),
            shapes,
            time,
            layout: if complex { "complex" } else { "real" }.into(),
            dtype: "f64le".into(),
            len: space.dim(),
        }
    }
}

fn write_f64s(path: &Path, data: impl Iterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::new();
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Writes `<stem>.bin` and `<stem>.json`; returns the binary path.
pub fn write_snapshot(dir: &Path, stem: &str, header: &SnapshotHeader, data: &[f64]) -> Result<PathBuf> {
    if data.len() != header.len {
        return Err(Error::InvalidArgument(format!("snapshot '{stem}': {} values, header says {}", data.len(), header.len)));
    }
    fs::create_dir_all(dir)?;
    let bin = dir.join(format!("{stem}.bin"));
    write_f64s(&bin, data.iter().copied())?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(header)?)?;
    Ok(bin)
}

pub fn write_complex_snapshot(dir: &Path, stem: &str, header: &SnapshotHeader, data: &[Complex64]) -> Result<PathBuf> {
    if data.len() != header.len {
        return Err(Error::InvalidArgument(format!("snapshot '{stem}': {} values, header says {}", data.len(), header.len)));
    }
    fs::create_dir_all(dir)?;
    let bin = dir.join(format!("{stem}.bin"));
    write_f64s(&bin, data.iter().map(|z| z.re).chain(data.iter().map(|z| z.im)))?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(header)?)?;
    Ok(bin)
}

/// Reads a snapshot back as (header, values); complex files return 2·len values.
pub fn read_snapshot(bin: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    let header: SnapshotHeader = serde_json::from_str(&fs::read_to_string(bin.with_extension("json"))?)?;
    let bytes = fs::read(bin)?;
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let want = if header.layout == "complex" { 2 * header.len } else { header.len };
    if vals.len() != want || bytes.len() % 8 != 0 {
        return Err(Error::Io(format!("{}: expected {want} values, found {}", bin.display(), vals.len())));
    }
    Ok((header, vals))
}

/// Serializes rows with a header line taken from the struct fields.
pub fn write_csv<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_csv(fs::File::create(path)?, rows)
}

pub fn build_id() -> String {
    match option_env!("COLDPLASMA_BUILD_ID") {
        Some(id) => format!("{}-{}+{id}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        None => format!("{}-{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
