//! Snapshot file formats for batch-solver coupling.
//!
//! Binary format (".gfld"): header `GFLD`, version u32, n_f u32, m_f u32,
//! n_d u32, the parameter point as n_d little-endian f64, followed by
//! n_f * m_f row-major little-endian f64 values.
//!
//! CSV format: a plain comma-separated matrix, one row per line, with a
//! sidecar `<file>.meta.json` holding `{"xi": [...]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::ParamPoint;
use crate::snapshot::{FieldSnapshot, SnapshotError};

pub const GFLD_MAGIC: &[u8; 4] = b"GFLD";
pub const GFLD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: missing sidecar metadata {sidecar}")]
    MissingSidecar { path: PathBuf, sidecar: PathBuf },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes a snapshot in the binary format.
pub fn write_gfld(path: &Path, snapshot: &FieldSnapshot) -> Result<(), IoError> {
    let (n_f, m_f) = snapshot.shape();
    let xi = snapshot.params().coords();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(GFLD_MAGIC).map_err(io_err(path))?;
    w.write_all(&GFLD_VERSION.to_le_bytes()).map_err(io_err(path))?;
    w.write_all(&(n_f as u32).to_le_bytes()).map_err(io_err(path))?;
    w.write_all(&(m_f as u32).to_le_bytes()).map_err(io_err(path))?;
    w.write_all(&(xi.len() as u32).to_le_bytes())
        .map_err(io_err(path))?;
    for &c in xi {
        w.write_all(&c.to_le_bytes()).map_err(io_err(path))?;
    }
    for i in 0..n_f {
        for j in 0..m_f {
            w.write_all(&snapshot.field()[(i, j)].to_le_bytes())
                .map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a snapshot in the binary format.
pub fn read_gfld(path: &Path) -> Result<FieldSnapshot, IoError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err(path))?;
    if &magic != GFLD_MAGIC {
        return Err(malformed(path, "bad magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut next_u32 = |r: &mut BufReader<File>| -> Result<u32, IoError> {
        r.read_exact(&mut u32buf).map_err(io_err(path))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = next_u32(&mut r)?;
    if version != GFLD_VERSION {
        return Err(malformed(path, format!("unsupported version {version}")));
    }
    let n_f = next_u32(&mut r)? as usize;
    let m_f = next_u32(&mut r)? as usize;
    let n_d = next_u32(&mut r)? as usize;
    if n_f == 0 || m_f == 0 || n_d == 0 || n_d > 6 {
        return Err(malformed(path, "bad header dimensions"));
    }
    let mut f64buf = [0u8; 8];
    let mut next_f64 = |r: &mut BufReader<File>| -> Result<f64, IoError> {
        r.read_exact(&mut f64buf).map_err(io_err(path))?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut xi = Vec::with_capacity(n_d);
    for _ in 0..n_d {
        xi.push(next_f64(&mut r)?);
    }
    let mut values = Vec::with_capacity(n_f * m_f);
    for _ in 0..n_f * m_f {
        values.push(next_f64(&mut r)?);
    }
    let params = ParamPoint::new(xi)?;
    Ok(FieldSnapshot::from_flat(&values, n_f, m_f, params)?)
}

#[derive(Serialize, Deserialize)]
struct SidecarMeta {
    xi: Vec<f64>,
}

/// Writes a snapshot as a CSV matrix plus a `<file>.meta.json` sidecar.
pub fn write_csv_snapshot(path: &Path, snapshot: &FieldSnapshot) -> Result<(), IoError> {
    let (n_f, m_f) = snapshot.shape();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for i in 0..n_f {
        let row: Vec<String> = (0..m_f)
            .map(|j| format!("{}", snapshot.field()[(i, j)]))
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    let sidecar = sidecar_path(path);
    let meta = SidecarMeta {
        xi: snapshot.params().coords().to_vec(),
    };
    let file = File::create(&sidecar).map_err(io_err(&sidecar))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &meta)
        .map_err(|e| malformed(&sidecar, e.to_string()))?;
    Ok(())
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Reads a CSV matrix snapshot with its sidecar metadata.
pub fn read_csv_snapshot(path: &Path) -> Result<FieldSnapshot, IoError> {
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(IoError::MissingSidecar {
            path: path.to_path_buf(),
            sidecar,
        });
    }
    let meta: SidecarMeta = serde_json::from_reader(BufReader::new(
        File::open(&sidecar).map_err(io_err(&sidecar))?,
    ))
    .map_err(|e| malformed(&sidecar, e.to_string()))?;
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| malformed(path, e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(malformed(path, "empty matrix"));
    }
    let m_f = rows[0].len();
    if rows.iter().any(|r| r.len() != m_f) {
        return Err(malformed(path, "ragged rows"));
    }
    let n_f = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let params = ParamPoint::new(meta.xi)?;
    Ok(FieldSnapshot::from_flat(&flat, n_f, m_f, params)?)
}

/// Reads a snapshot, choosing the format by file extension (".gfld" binary,
/// anything else CSV).
pub fn read_snapshot(path: &Path) -> Result<FieldSnapshot, IoError> {
    if path.extension().and_then(|e| e.to_str()) == Some("gfld") {
        read_gfld(path)
    } else {
        read_csv_snapshot(path)
    }
}
