//! Self-describing stream layout (little-endian):
//!
//! | field        | type                                   |
//! |--------------|----------------------------------------|
//! | magic        | `b"WHFZ"`                              |
//! | version      | `u16`                                  |
//! | mode         | `u8` (0 rate, 1 precision, 2 accuracy) |
//! | parameter    | `u32` bpv / planes, `f64` tolerance    |
//! | rows, cols   | `u64`, `u64`                           |
//! | block size   | `u8` (always 4)                        |
//! | block count  | `u64`                                  |
//! | block index  | `u64` bit offset per block             |
//! | payload      | bits, zero-padded to a byte boundary   |

use std::fs;
use std::path::Path;

use super::block::BLOCK;
use super::{blocks_along, CodecError, CodecMode};

pub const STREAM_MAGIC: &[u8; 4] = b"WHFZ";
pub const STREAM_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedStream {
    mode: CodecMode,
    rows: usize,
    cols: usize,
    block_offsets: Vec<u64>,
    payload: Vec<u8>,
    payload_bits: u64,
}

impl CompressedStream {
    pub(super) fn from_parts(
        mode: CodecMode,
        rows: usize,
        cols: usize,
        block_offsets: Vec<u64>,
        payload: Vec<u8>,
        payload_bits: u64,
    ) -> Self {
        Self {
            mode,
            rows,
            cols,
            block_offsets,
            payload,
            payload_bits,
        }
    }

    pub fn mode(&self) -> CodecMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_offsets(&self) -> &[u64] {
        &self.block_offsets
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Exact number of coded payload bits, excluding byte padding.
    pub fn payload_bits(&self) -> u64 {
        self.payload_bits
    }

    /// Payload bits per array element.
    pub fn bits_per_value(&self) -> f64 {
        self.payload_bits as f64 / (self.rows * self.cols) as f64
    }

    /// Compression ratio against binary32 input.
    pub fn ratio(&self) -> f64 {
        32.0 / self.bits_per_value()
    }

    /// Size of the serialized stream in bytes.
    pub fn encoded_len(&self) -> usize {
        let param = match self.mode {
            CodecMode::FixedAccuracy { .. } => 8,
            _ => 4,
        };
        4 + 2 + 1 + param + 16 + 1 + 8 + 8 * self.block_offsets.len() + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
        match self.mode {
            CodecMode::FixedRate { bpv } => {
                out.push(0);
                out.extend_from_slice(&bpv.to_le_bytes());
            }
            CodecMode::FixedPrecision { planes } => {
                out.push(1);
                out.extend_from_slice(&planes.to_le_bytes());
            }
            CodecMode::FixedAccuracy { tolerance } => {
                out.push(2);
                out.extend_from_slice(&tolerance.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        out.push(BLOCK as u8);
        out.extend_from_slice(&(self.block_offsets.len() as u64).to_le_bytes());
        for o in &self.block_offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses and validates a serialized stream. Each failure class maps to
    /// its own error: bad magic/version/mode, truncated header or payload,
    /// and block offsets outside the payload.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4)?.try_into().expect("4 bytes");
        if &magic != STREAM_MAGIC {
            return Err(CodecError::Magic(magic));
        }
        let version = u16::from_le_bytes(cur.array()?);
        if version != STREAM_VERSION {
            return Err(CodecError::Version(version));
        }
        let mode = match cur.take(1)?[0] {
            0 => CodecMode::FixedRate {
                bpv: u32::from_le_bytes(cur.array()?),
            },
            1 => CodecMode::FixedPrecision {
                planes: u32::from_le_bytes(cur.array()?),
            },
            2 => CodecMode::FixedAccuracy {
                tolerance: f64::from_le_bytes(cur.array()?),
            },
            m => return Err(CodecError::Mode(m)),
        };
        mode.validate()
            .map_err(|e| CodecError::Header(format!("mode parameter: {e}")))?;
        let rows = cur.u64()?;
        let cols = cur.u64()?;
        let block_size = cur.take(1)?[0];
        if block_size as usize != BLOCK {
            return Err(CodecError::BlockSize(block_size));
        }
        let count = cur.u64()?;
        let (rows, cols) = (to_usize(rows)?, to_usize(cols)?);
        if rows == 0 || cols == 0 {
            return Err(CodecError::Header(format!("empty array {rows}x{cols}")));
        }
        let expected = blocks_along(rows)
            .checked_mul(blocks_along(cols))
            .ok_or_else(|| CodecError::Header("block count overflows".into()))?;
        if count != expected as u64 {
            return Err(CodecError::Header(format!(
                "{count} blocks recorded, {rows}x{cols} needs {expected}"
            )));
        }
        if (bytes.len() - cur.pos) / 8 < expected {
            return Err(CodecError::Truncated("block index"));
        }
        let mut block_offsets = Vec::with_capacity(expected);
        for _ in 0..expected {
            block_offsets.push(cur.u64()?);
        }
        let payload = bytes[cur.pos..].to_vec();
        let available = payload.len() as u64 * 8;
        let mut prev = 0;
        for (block, &offset) in block_offsets.iter().enumerate() {
            if offset >= available || offset < prev {
                return Err(CodecError::Offset {
                    block,
                    offset,
                    payload_bits: available,
                });
            }
            prev = offset;
        }
        if let Some(budget) = mode_budget(mode) {
            for (block, &offset) in block_offsets.iter().enumerate() {
                if offset != block as u64 * budget {
                    return Err(CodecError::Offset {
                        block,
                        offset,
                        payload_bits: available,
                    });
                }
            }
        }
        let mut stream = Self {
            mode,
            rows,
            cols,
            block_offsets,
            payload,
            payload_bits: 0,
        };
        stream.payload_bits = stream.last_block_end()?;
        if stream.payload_bits > available {
            return Err(CodecError::Truncated("block payload"));
        }
        Ok(stream)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CodecError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CodecError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn mode_budget(mode: CodecMode) -> Option<u64> {
    match mode {
        CodecMode::FixedRate { bpv } => Some(bpv as u64 * (BLOCK * BLOCK) as u64),
        _ => None,
    }
}

fn to_usize(v: u64) -> Result<usize, CodecError> {
    usize::try_from(v).map_err(|_| CodecError::Header(format!("dimension {v} too large")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.bytes.len() {
            return Err(CodecError::Truncated("header"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}
