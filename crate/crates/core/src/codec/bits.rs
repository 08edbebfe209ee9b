//! LSB-first bit streams backed by 64-bit words.

#[derive(Debug, Clone, Default)]
pub struct BitWriter {
    words: Vec<u64>,
    len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit_len(&self) -> u64 {
        self.len
    }

    /// Appends the low `n` bits of `value` (`n <= 64`).
    pub fn write_bits(&mut self, value: u64, n: u32) {
        if n == 0 {
            return;
        }
        let value = if n == 64 { value } else { value & ((1u64 << n) - 1) };
        let offset = (self.len % 64) as u32;
        if offset == 0 {
            self.words.push(value);
        } else {
            *self.words.last_mut().expect("partial word") |= value << offset;
            if offset + n > 64 {
                self.words.push(value >> (64 - offset));
            }
        }
        self.len += n as u64;
    }

    #[inline]
    pub fn write_bit(&mut self, bit: bool) -> bool {
        self.write_bits(bit as u64, 1);
        bit
    }

    pub fn pad_to(&mut self, bit_len: u64) {
        debug_assert!(bit_len >= self.len);
        let mut remaining = bit_len - self.len;
        while remaining > 0 {
            let n = remaining.min(64) as u32;
            self.write_bits(0, n);
            remaining -= n as u64;
        }
    }

    pub fn append(&mut self, other: &BitWriter) {
        let full = (other.len / 64) as usize;
        for &w in &other.words[..full] {
            self.write_bits(w, 64);
        }
        let tail = (other.len % 64) as u32;
        if tail > 0 {
            self.write_bits(other.words[full], tail);
        }
    }

    /// Bytes holding the stream, zero-padded to a byte boundary.
    pub fn into_bytes(self) -> Vec<u8> {
        let n = self.len.div_ceil(8) as usize;
        let mut bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(n);
        bytes
    }
}

/// Read past the end of the available bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfBits;

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    limit: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            limit: bytes.len() as u64 * 8,
            pos: 0,
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn seek(&mut self, pos: u64) {
        self.pos = pos;
    }

    /// Reads `n <= 64` bits.
    #[inline]
    pub fn read_bits(&mut self, n: u32) -> Result<u64, OutOfBits> {
        if n == 0 {
            return Ok(0);
        }
        if self.pos + n as u64 > self.limit {
            return Err(OutOfBits);
        }
        let byte = (self.pos / 8) as usize;
        let shift = (self.pos % 8) as u32;
        if n + shift <= 64 && byte + 8 <= self.bytes.len() {
            let word = u64::from_le_bytes(self.bytes[byte..byte + 8].try_into().expect("8 bytes"));
            let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
            self.pos += n as u64;
            return Ok((word >> shift) & mask);
        }
        let mut out = 0u64;
        let mut got = 0u32;
        while got < n {
            let byte = (self.pos / 8) as usize;
            let shift = (self.pos % 8) as u32;
            let mut chunk = [0u8; 8];
            let end = (byte + 8).min(self.bytes.len());
            chunk[..end - byte].copy_from_slice(&self.bytes[byte..end]);
            let word = u64::from_le_bytes(chunk) >> shift;
            let take = (n - got).min(64 - shift);
            let mask = if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
            out |= (word & mask) << got;
            got += take;
            self.pos += take as u64;
        }
        Ok(out)
    }

    #[inline]
    pub fn read_bit(&mut self) -> Result<bool, OutOfBits> {
        if self.pos >= self.limit {
            return Err(OutOfBits);
        }
        let b = (self.bytes[(self.pos / 8) as usize] >> (self.pos % 8)) & 1;
        self.pos += 1;
        Ok(b == 1)
    }
}
