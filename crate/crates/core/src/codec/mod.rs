//! Block transform compression of 2D binary32 arrays.
//!
//! Arrays are cut into 4x4 blocks (edge blocks padded by replicating the
//! last row/column) and each block is coded independently under one of
//! three controls:
//!
//! * [`CodecMode::FixedRate`]: every block takes exactly `16·bpv` bits.
//! * [`CodecMode::FixedPrecision`]: at most `planes` bit planes per block.
//! * [`CodecMode::FixedAccuracy`]: every sample within `tolerance`; a zero
//!   tolerance reproduces the input bit for bit.
//!
//! The stream keeps a bit offset per block, so any block can be decoded on
//! its own and whole-array decoding runs block rows in parallel.

mod bits;
mod block;
mod metrics;
mod stream;

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{Dense, DenseView};
use bits::{BitReader, BitWriter};
use block::{Block, BlockInput, BLOCK, BLOCK_VALUES};

pub use metrics::{codec_metrics, CodecMetrics};
pub use stream::{CompressedStream, STREAM_MAGIC, STREAM_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodecMode {
    FixedRate { bpv: u32 },
    FixedPrecision { planes: u32 },
    FixedAccuracy { tolerance: f64 },
}

impl CodecMode {
    pub fn validate(&self) -> Result<(), CodecError> {
        match *self {
            CodecMode::FixedRate { bpv } if !(1..=32).contains(&bpv) => {
                Err(CodecError::Parameter(format!("bits per value {bpv} not in 1..=32")))
            }
            CodecMode::FixedPrecision { planes } if !(1..=32).contains(&planes) => {
                Err(CodecError::Parameter(format!("bit planes {planes} not in 1..=32")))
            }
            CodecMode::FixedAccuracy { tolerance } if tolerance < 0.0 || tolerance.is_nan() => {
                Err(CodecError::NegativeTolerance(tolerance))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CodecMode::FixedRate { .. } => "rate",
            CodecMode::FixedPrecision { .. } => "precision",
            CodecMode::FixedAccuracy { .. } => "accuracy",
        }
    }

    /// Bits per block under fixed rate.
    fn block_budget(&self) -> Option<u64> {
        match *self {
            CodecMode::FixedRate { bpv } => Some(bpv as u64 * BLOCK_VALUES as u64),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("array must have at least one row and column")]
    Empty,
    #[error("non-finite input at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("tolerance {0} is negative")]
    NegativeTolerance(f64),
    #[error("invalid codec parameter: {0}")]
    Parameter(String),
    #[error("bad stream magic {0:?}, expected \"WHFZ\"")]
    Magic([u8; 4]),
    #[error("unsupported stream version {0}")]
    Version(u16),
    #[error("unknown codec mode {0}")]
    Mode(u8),
    #[error("unsupported block size {0}")]
    BlockSize(u8),
    #[error("stream header is inconsistent: {0}")]
    Header(String),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("block {block} offset {offset} outside payload of {payload_bits} bits")]
    Offset {
        block: usize,
        offset: u64,
        payload_bits: u64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CodecError {
    /// Whether the error stems from malformed stream data.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            CodecError::Magic(_)
                | CodecError::Version(_)
                | CodecError::Mode(_)
                | CodecError::BlockSize(_)
                | CodecError::Header(_)
                | CodecError::Truncated(_)
                | CodecError::Offset { .. }
        )
    }
}

fn blocks_along(n: usize) -> usize {
    n.div_ceil(BLOCK)
}

fn gather(array: &DenseView<'_>, br: usize, bc: usize) -> BlockInput {
    let (rows, cols) = (array.rows(), array.cols());
    let (r0, c0) = (br * BLOCK, bc * BLOCK);
    let mut values = [0.0f32; BLOCK_VALUES];
    for r in 0..BLOCK {
        let src = array.row((r0 + r).min(rows - 1));
        for c in 0..BLOCK {
            values[c + BLOCK * r] = src[(c0 + c).min(cols - 1)];
        }
    }
    BlockInput {
        values,
        valid_rows: (rows - r0).min(BLOCK),
        valid_cols: (cols - c0).min(BLOCK),
    }
}

fn encode_block(w: &mut BitWriter, mode: CodecMode, input: &BlockInput) {
    match mode {
        CodecMode::FixedRate { bpv } => block::encode_rate(w, input, bpv as u64 * BLOCK_VALUES as u64),
        CodecMode::FixedPrecision { planes } => block::encode_precision(w, input, planes),
        CodecMode::FixedAccuracy { tolerance } => block::encode_accuracy(w, input, tolerance),
    }
}

/// Compresses `array` under `mode`.
pub fn compress(array: DenseView<'_>, mode: CodecMode) -> Result<CompressedStream, CodecError> {
    mode.validate()?;
    let (rows, cols) = (array.rows(), array.cols());
    if rows == 0 || cols == 0 {
        return Err(CodecError::Empty);
    }
    if let Some(i) = array.data().iter().position(|v| !v.is_finite()) {
        return Err(CodecError::NonFinite {
            row: i / cols,
            col: i % cols,
        });
    }
    let (by, bx) = (blocks_along(rows), blocks_along(cols));
    let encoded: Vec<(BitWriter, Vec<u64>)> = (0..by)
        .into_par_iter()
        .map(|br| {
            let mut w = BitWriter::new();
            let mut offsets = Vec::with_capacity(bx);
            for bc in 0..bx {
                offsets.push(w.bit_len());
                encode_block(&mut w, mode, &gather(&array, br, bc));
            }
            (w, offsets)
        })
        .collect();

    let mut payload = BitWriter::new();
    let mut block_offsets = Vec::with_capacity(by * bx);
    for (w, offsets) in &encoded {
        let base = payload.bit_len();
        block_offsets.extend(offsets.iter().map(|o| base + o));
        payload.append(w);
    }
    let payload_bits = payload.bit_len();
    Ok(CompressedStream::from_parts(
        mode,
        rows,
        cols,
        block_offsets,
        payload.into_bytes(),
        payload_bits,
    ))
}

impl CompressedStream {
    pub fn blocks_x(&self) -> usize {
        blocks_along(self.cols())
    }

    pub fn blocks_y(&self) -> usize {
        blocks_along(self.rows())
    }

    /// Decodes block `index` (row-major block order) including padding.
    pub fn decode_block(&self, index: usize) -> Result<Block, CodecError> {
        let offset = *self
            .block_offsets()
            .get(index)
            .ok_or(CodecError::Header(format!("no block {index}")))?;
        let mut r = BitReader::new(self.payload());
        r.seek(offset);
        self.decode_at(&mut r)
    }

    /// Decodes the block at the reader position, returning it and leaving the
    /// reader at the block's end.
    fn decode_at(&self, r: &mut BitReader<'_>) -> Result<Block, CodecError> {
        let truncated = |_| CodecError::Truncated("block payload");
        match self.mode() {
            CodecMode::FixedRate { .. } => {
                let budget = self.mode().block_budget().expect("rate budget");
                block::decode_rate(r, budget).map_err(truncated)
            }
            CodecMode::FixedPrecision { .. } => block::decode_precision(r).map_err(truncated),
            CodecMode::FixedAccuracy { .. } => block::decode_accuracy(r).map_err(truncated),
        }
    }

    /// End bit of the last block, found by decoding it.
    pub(crate) fn last_block_end(&self) -> Result<u64, CodecError> {
        let last = *self.block_offsets().last().expect("at least one block");
        let mut r = BitReader::new(self.payload());
        r.seek(last);
        self.decode_at(&mut r)?;
        Ok(match self.mode().block_budget() {
            Some(b) => last + b,
            None => r.position(),
        })
    }
}

/// Reconstructs the array held by `stream`.
pub fn decompress(stream: &CompressedStream) -> Result<Dense, CodecError> {
    let (rows, cols) = (stream.rows(), stream.cols());
    let bx = stream.blocks_x();
    let mut out = vec![0.0f32; rows * cols];
    out.par_chunks_mut(BLOCK * cols)
        .enumerate()
        .try_for_each(|(br, band)| -> Result<(), CodecError> {
            let band_rows = band.len() / cols;
            for bc in 0..bx {
                let block = stream.decode_block(br * bx + bc)?;
                let c0 = bc * BLOCK;
                let width = (cols - c0).min(BLOCK);
                for r in 0..band_rows {
                    band[r * cols + c0..r * cols + c0 + width]
                        .copy_from_slice(&block[BLOCK * r..BLOCK * r + width]);
                }
            }
            Ok(())
        })?;
    Ok(Dense::new(rows, cols, out).expect("dimensions from header"))
}

/// Decodes sequentially on the calling thread.
pub fn decompress_sequential(stream: &CompressedStream) -> Result<Dense, CodecError> {
    let (rows, cols) = (stream.rows(), stream.cols());
    let bx = stream.blocks_x();
    let mut out = Dense::zeros(rows, cols).into_data();
    for b in 0..stream.block_offsets().len() {
        let block = stream.decode_block(b)?;
        let (r0, c0) = ((b / bx) * BLOCK, (b % bx) * BLOCK);
        for r in 0..(rows - r0).min(BLOCK) {
            for c in 0..(cols - c0).min(BLOCK) {
                out[(r0 + r) * cols + c0 + c] = block[c + BLOCK * r];
            }
        }
    }
    Ok(Dense::new(rows, cols, out).expect("dimensions from header"))
}
