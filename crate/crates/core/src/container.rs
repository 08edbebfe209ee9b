//! Little-endian matrix container files.
//!
//! Layout: magic `WHFM`, version `u16`, kind `u8` (0 dense, 1 csr, 2 diag),
//! element type `u8` (0 binary32, 1 binary64), rows `u64`, cols `u64`, then
//! the payload. Dense payloads are row-major. CSR payloads are
//! `nnz: u64`, `rows + 1` row offsets as `u64`, `nnz` column indices as `u32`
//! and `nnz` values. Diagonal payloads hold `rows` values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::{Csr, Dense, Diagonal, MatrixError};

pub const MAGIC: &[u8; 4] = b"WHFM";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"WHFM\"")]
    Magic([u8; 4]),
    #[error("unsupported container version {0}")]
    Version(u16),
    #[error("unknown matrix kind {0}")]
    Kind(u8),
    #[error("unknown element type {0}")]
    ElementType(u8),
    #[error("binary64 elements are only supported for dense matrices")]
    WideSparse,
    #[error("diagonal matrix must be square, got {rows}x{cols}")]
    NonSquareDiagonal { rows: u64, cols: u64 },
    #[error("dimension {0} does not fit in memory")]
    Dimension(u64),
    #[error("invalid matrix: {0}")]
    Matrix(#[from] MatrixError),
}

/// A matrix as read from or written to a container file.
#[derive(Debug, Clone, PartialEq)]
pub enum Stored {
    Dense(Dense),
    DenseF64 {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    Csr(Csr),
    Diagonal(Diagonal),
}

impl Stored {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Stored::Dense(_) | Stored::DenseF64 { .. } => "dense",
            Stored::Csr(_) => "csr",
            Stored::Diagonal(_) => "diag",
        }
    }
}

fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f32s(w: &mut impl Write, vals: &[f32]) -> io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn header(w: &mut impl Write, kind: u8, elem: u8, rows: usize, cols: usize) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[kind, elem])?;
    put_u64(w, rows as u64)?;
    put_u64(w, cols as u64)
}

pub fn write_matrix(w: &mut impl Write, m: &Stored) -> Result<(), ContainerError> {
    match m {
        Stored::Dense(d) => {
            header(w, 0, 0, d.rows(), d.cols())?;
            put_f32s(w, d.data())?;
        }
        Stored::DenseF64 { rows, cols, data } => {
            header(w, 0, 1, *rows, *cols)?;
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Stored::Csr(c) => {
            header(w, 1, 0, c.rows(), c.cols())?;
            put_u64(w, c.nnz() as u64)?;
            for &o in c.row_offsets() {
                put_u64(w, o as u64)?;
            }
            for &ci in c.col_indices() {
                w.write_all(&ci.to_le_bytes())?;
            }
            put_f32s(w, c.values())?;
        }
        Stored::Diagonal(d) => {
            header(w, 2, 0, d.len(), d.len())?;
            put_f32s(w, d.values())?;
        }
    }
    Ok(())
}

fn get<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}

fn to_usize(v: u64) -> Result<usize, ContainerError> {
    usize::try_from(v).map_err(|_| ContainerError::Dimension(v))
}

fn get_f32s(r: &mut impl Read, n: usize) -> io::Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_matrix(r: &mut impl Read) -> Result<Stored, ContainerError> {
    let magic: [u8; 4] = get(r)?;
    if &magic != MAGIC {
        return Err(ContainerError::Magic(magic));
    }
    let version = u16::from_le_bytes(get(r)?);
    if version != VERSION {
        return Err(ContainerError::Version(version));
    }
    let [kind, elem] = get::<2>(r)?;
    if elem > 1 {
        return Err(ContainerError::ElementType(elem));
    }
    let rows_raw = get_u64(r)?;
    let cols_raw = get_u64(r)?;
    let (rows, cols) = (to_usize(rows_raw)?, to_usize(cols_raw)?);
    let count = rows
        .checked_mul(cols)
        .ok_or(ContainerError::Dimension(rows_raw.saturating_mul(cols_raw)))?;
    match (kind, elem) {
        (0, 0) => Ok(Stored::Dense(Dense::new(rows, cols, get_f32s(r, count)?)?)),
        (0, 1) => {
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Ok(Stored::DenseF64 { rows, cols, data })
        }
        (1, 0) => {
            let nnz = to_usize(get_u64(r)?)?;
            let mut offsets = Vec::with_capacity(rows + 1);
            for _ in 0..=rows {
                offsets.push(to_usize(get_u64(r)?)?);
            }
            let mut idx_buf = vec![0u8; nnz * 4];
            r.read_exact(&mut idx_buf)?;
            let idx = idx_buf
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let vals = get_f32s(r, nnz)?;
            Ok(Stored::Csr(Csr::new(rows, cols, offsets, idx, vals)?))
        }
        (2, 0) => {
            if rows != cols {
                return Err(ContainerError::NonSquareDiagonal {
                    rows: rows_raw,
                    cols: cols_raw,
                });
            }
            Ok(Stored::Diagonal(Diagonal::new(get_f32s(r, rows)?)))
        }
        (1 | 2, 1) => Err(ContainerError::WideSparse),
        (k, _) => Err(ContainerError::Kind(k)),
    }
}

pub fn save(path: impl AsRef<Path>, m: &Stored) -> Result<(), ContainerError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Stored, ContainerError> {
    read_matrix(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(m: &Stored) -> Stored {
        let mut buf = Vec::new();
        write_matrix(&mut buf, m).unwrap();
        read_matrix(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn header_layout_is_little_endian() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, &Stored::Dense(Dense::zeros(2, 3))).unwrap();
        assert_eq!(&buf[..4], b"WHFM");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..8], &[0, 0]);
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &3u64.to_le_bytes());
        assert_eq!(buf.len(), 24 + 6 * 4);
    }

    #[test]
    fn all_kinds_round_trip() {
        let csr = Csr::from_rows(4, vec![vec![(0, 1.0), (3, -2.5)], vec![(1, f32::MIN_POSITIVE)]]).unwrap();
        for m in [
            Stored::Dense(Dense::from_fn(3, 2, |i, j| i as f32 - 0.5 * j as f32)),
            Stored::DenseF64 {
                rows: 1,
                cols: 2,
                data: vec![1e-300, -3.0],
            },
            Stored::Csr(csr),
            Stored::Diagonal(Diagonal::new(vec![0.25, -0.0, 7.0])),
        ] {
            assert_eq!(round_trip(&m), m);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, &Stored::Diagonal(Diagonal::identity(4))).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_matrix(&mut bad.as_slice()), Err(ContainerError::Magic(_))));
        let short = &buf[..buf.len() - 1];
        assert!(matches!(read_matrix(&mut &short[..]), Err(ContainerError::Io(_))));
    }
}
