//! Binary vector I/O.
//!
//! The on-disk format ("KGEV") is a 24-byte header — magic `KGEV`, `u32`
//! version, `u64` row count, `u64` column count — followed by row-major f32
//! little-endian payload. A sidecar TSV (`index<TAB>label`) names each row.
//! Values are stored as f32 regardless of the in-memory scalar type.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::{Matrix, Scalar};

pub const MAGIC: &[u8; 4] = b"KGEV";
pub const VERSION: u32 = 1;
/// Header size in bytes: magic + version + rows + cols.
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum VecIoError {
    #[error("{path}: bad magic (expected `KGEV`)")]
    BadMagic { path: String },
    #[error("{path}: unsupported version {found} (expected {VERSION})")]
    BadVersion { path: String, found: u32 },
    #[error("{path}: payload truncated: expected {expected} bytes after header, found {found}")]
    Truncated {
        path: String,
        expected: u64,
        found: u64,
    },
    #[error("{path}: dimensions {rows}x{cols} overflow addressable size")]
    TooLarge { path: String, rows: u64, cols: u64 },
    #[error("{path}: non-finite value at row {row}, column {col}")]
    NonFinite { path: String, row: usize, col: usize },
    #[error(
        "label sidecar {path} has {labels} label(s) but the vector file has {rows} row(s)"
    )]
    RowCountMismatch {
        path: String,
        labels: usize,
        rows: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Write `matrix` in KGEV format; values are narrowed to f32.
pub fn write_vectors<T: Scalar>(path: &Path, matrix: &Matrix<T>) -> Result<(), VecIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(matrix.rows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.cols() as u64).to_le_bytes())?;
    for &v in matrix.data() {
        w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a KGEV file into a matrix of scalar type `T`. Rejects bad magic,
/// unknown versions, truncated payloads, and non-finite values.
pub fn read_vectors<T: Scalar>(path: &Path) -> Result<Matrix<T>, VecIoError> {
    let display = || path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut magic, path, 0)?;
    if &magic != MAGIC {
        return Err(VecIoError::BadMagic { path: display() });
    }
    let mut buf4 = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut buf4, path, 0)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(VecIoError::BadVersion {
            path: display(),
            found: version,
        });
    }
    let mut buf8 = [0u8; 8];
    read_exact_or_truncated(&mut r, &mut buf8, path, 0)?;
    let rows = u64::from_le_bytes(buf8);
    read_exact_or_truncated(&mut r, &mut buf8, path, 0)?;
    let cols = u64::from_le_bytes(buf8);

    let count = rows
        .checked_mul(cols)
        .filter(|&n| n <= usize::MAX as u64 / 4)
        .ok_or_else(|| VecIoError::TooLarge {
            path: display(),
            rows,
            cols,
        })? as usize;
    let expected_bytes = (count * 4) as u64;

    let mut payload = vec![0u8; count * 4];
    let mut filled = 0usize;
    while filled < payload.len() {
        let n = r.read(&mut payload[filled..])?;
        if n == 0 {
            return Err(VecIoError::Truncated {
                path: display(),
                expected: expected_bytes,
                found: filled as u64,
            });
        }
        filled += n;
    }
    // Trailing garbage after the payload is also a format error.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(VecIoError::Truncated {
            path: display(),
            expected: expected_bytes,
            found: expected_bytes + 1,
        });
    }

    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(VecIoError::NonFinite {
                path: display(),
                row: i / cols as usize,
                col: i % cols as usize,
            });
        }
        data.push(T::from_f64(v as f64));
    }
    Ok(Matrix::from_vec(rows as usize, cols as usize, data))
}

fn read_exact_or_truncated(
    r: &mut impl Read,
    buf: &mut [u8],
    path: &Path,
    payload_expected: u64,
) -> Result<(), VecIoError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            VecIoError::Truncated {
                path: path.display().to_string(),
                expected: payload_expected.max(HEADER_LEN as u64),
                found: 0,
            }
        } else {
            VecIoError::Io(e)
        }
    })
}

/// Write the row-label sidecar (`index<TAB>label` per line).
pub fn write_labels(path: &Path, labels: &[String]) -> Result<(), VecIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, label) in labels.iter().enumerate() {
        writeln!(w, "{i}\t{label}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a row-label sidecar and check it names exactly `rows` rows.
pub fn read_labels(path: &Path, rows: usize) -> Result<Vec<String>, VecIoError> {
    let contents = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for line in contents.lines() {
        if line.is_empty() {
            continue;
        }
        let label = line.split_once('\t').map(|(_, l)| l).unwrap_or(line);
        labels.push(label.to_string());
    }
    if labels.len() != rows {
        return Err(VecIoError::RowCountMismatch {
            path: path.display().to_string(),
            labels: labels.len(),
            rows,
        });
    }
    Ok(labels)
}
