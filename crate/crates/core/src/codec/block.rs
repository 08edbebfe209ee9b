//! 4x4 block transform coding.
//!
//! A block is aligned to its largest exponent as 30-bit fixed point,
//! decorrelated with an integer lifting transform along rows then columns,
//! reordered by total sequency, mapped to negabinary and emitted bit plane by
//! bit plane with group-tested run lengths, most significant plane first.

use super::bits::{BitReader, BitWriter, OutOfBits};

pub const BLOCK: usize = 4;
pub const BLOCK_VALUES: usize = BLOCK * BLOCK;

/// Bit planes of a transformed coefficient.
pub const INT_PLANES: u32 = 32;
const EXP_BITS: u32 = 9;
const EXP_BIAS: i32 = 160;
const PREC_BITS: u32 = 6;
const NBMASK: u32 = 0xaaaa_aaaa;

/// Header bits of a non-empty fixed-rate block (flag + exponent).
pub const RATE_HEADER_BITS: u64 = 1 + EXP_BITS as u64;

/// Coefficient order by total sequency; `PERM[k]` is the index (`col + 4·row`)
/// of the k-th coded coefficient.
const PERM: [usize; BLOCK_VALUES] = [0, 1, 4, 5, 2, 8, 6, 9, 3, 12, 10, 7, 13, 11, 14, 15];

pub type Block = [f32; BLOCK_VALUES];
type Coeffs = [u32; BLOCK_VALUES];

/// Block values plus the extent of real (unpadded) samples.
#[derive(Debug, Clone, Copy)]
pub struct BlockInput {
    pub values: Block,
    pub valid_rows: usize,
    pub valid_cols: usize,
}

impl BlockInput {
    fn valid(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.valid_rows).flat_map(move |r| (0..self.valid_cols).map(move |c| c + BLOCK * r))
    }

    fn max_abs(&self) -> f32 {
        self.values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    fn all_zero_bits(&self) -> bool {
        self.values.iter().all(|v| v.to_bits() == 0)
    }

    /// Largest error over the real samples; with `exact` any bit difference
    /// counts as infinite error.
    fn error(&self, decoded: &Block, exact: bool) -> f64 {
        self.valid().fold(0.0f64, |m, i| {
            if exact && decoded[i].to_bits() != self.values[i].to_bits() {
                return f64::INFINITY;
            }
            m.max((self.values[i] as f64 - decoded[i] as f64).abs())
        })
    }
}

/// `e` such that `|x| < 2^e` for the block maximum, as in `frexp`.
fn exponent(max_abs: f32) -> i32 {
    debug_assert!(max_abs > 0.0);
    let bits = (max_abs as f64).to_bits();
    ((bits >> 52) & 0x7ff) as i32 - 1022
}

fn fwd_lift(p: &mut [i32; BLOCK_VALUES], base: usize, stride: usize) {
    let (i0, i1, i2, i3) = (base, base + stride, base + 2 * stride, base + 3 * stride);
    let (mut x, mut y, mut z, mut w) = (p[i0], p[i1], p[i2], p[i3]);
    x = x.wrapping_add(w);
    x >>= 1;
    w = w.wrapping_sub(x);
    z = z.wrapping_add(y);
    z >>= 1;
    y = y.wrapping_sub(z);
    x = x.wrapping_add(z);
    x >>= 1;
    z = z.wrapping_sub(x);
    w = w.wrapping_add(y);
    w >>= 1;
    y = y.wrapping_sub(w);
    w = w.wrapping_add(y >> 1);
    y = y.wrapping_sub(w >> 1);
    (p[i0], p[i1], p[i2], p[i3]) = (x, y, z, w);
}

fn inv_lift(p: &mut [i32; BLOCK_VALUES], base: usize, stride: usize) {
    let (i0, i1, i2, i3) = (base, base + stride, base + 2 * stride, base + 3 * stride);
    let (mut x, mut y, mut z, mut w) = (p[i0], p[i1], p[i2], p[i3]);
    y = y.wrapping_add(w >> 1);
    w = w.wrapping_sub(y >> 1);
    y = y.wrapping_add(w);
    w = w.wrapping_shl(1);
    w = w.wrapping_sub(y);
    z = z.wrapping_add(x);
    x = x.wrapping_shl(1);
    x = x.wrapping_sub(z);
    y = y.wrapping_add(z);
    z = z.wrapping_shl(1);
    z = z.wrapping_sub(y);
    w = w.wrapping_add(x);
    x = x.wrapping_shl(1);
    x = x.wrapping_sub(w);
    (p[i0], p[i1], p[i2], p[i3]) = (x, y, z, w);
}

fn forward(values: &Block, emax: i32) -> Coeffs {
    let scale = 2f64.powi(30 - emax);
    let mut ints = [0i32; BLOCK_VALUES];
    for (q, &v) in ints.iter_mut().zip(values) {
        *q = (v as f64 * scale) as i32;
    }
    for row in 0..BLOCK {
        fwd_lift(&mut ints, BLOCK * row, 1);
    }
    for col in 0..BLOCK {
        fwd_lift(&mut ints, col, BLOCK);
    }
    let mut coeffs = [0u32; BLOCK_VALUES];
    for (c, &src) in coeffs.iter_mut().zip(&PERM) {
        *c = (ints[src] as u32).wrapping_add(NBMASK) ^ NBMASK;
    }
    coeffs
}

fn inverse(coeffs: &Coeffs, emax: i32) -> Block {
    let mut ints = [0i32; BLOCK_VALUES];
    for (&c, &dst) in coeffs.iter().zip(&PERM) {
        ints[dst] = (c ^ NBMASK).wrapping_sub(NBMASK) as i32;
    }
    for col in 0..BLOCK {
        inv_lift(&mut ints, col, BLOCK);
    }
    for row in 0..BLOCK {
        inv_lift(&mut ints, BLOCK * row, 1);
    }
    let scale = 2f64.powi(emax - 30);
    ints.map(|q| (q as f64 * scale) as f32)
}

fn truncate(coeffs: &Coeffs, planes: u32) -> Coeffs {
    let drop = INT_PLANES - planes.min(INT_PLANES);
    let mask = if drop >= 32 { 0 } else { u32::MAX << drop };
    coeffs.map(|c| c & mask)
}

/// Embedded coding of the top `planes` bit planes within `maxbits`.
/// Returns the bits written.
fn encode_ints(w: &mut BitWriter, maxbits: u64, planes: u32, data: &Coeffs) -> u64 {
    let kmin = INT_PLANES - planes.min(INT_PLANES);
    let mut bits = maxbits;
    let mut n = 0usize;
    let mut k = INT_PLANES;
    while bits > 0 && k > kmin {
        k -= 1;
        let mut x = 0u64;
        for (i, &d) in data.iter().enumerate() {
            x |= (((d >> k) & 1) as u64) << i;
        }
        // Coefficients already known to be significant are sent verbatim.
        let m = (n as u64).min(bits) as u32;
        bits -= m as u64;
        w.write_bits(x, m);
        x >>= m;
        // The rest is group tested: "any one left?" then unary position.
        while n < BLOCK_VALUES && bits > 0 {
            bits -= 1;
            if !w.write_bit(x != 0) {
                break;
            }
            while n < BLOCK_VALUES - 1 && bits > 0 {
                bits -= 1;
                if w.write_bit(x & 1 != 0) {
                    break;
                }
                x >>= 1;
                n += 1;
            }
            x >>= 1;
            n += 1;
        }
    }
    maxbits - bits
}

fn decode_ints(r: &mut BitReader<'_>, maxbits: u64, planes: u32) -> Result<Coeffs, OutOfBits> {
    let kmin = INT_PLANES - planes.min(INT_PLANES);
    let mut bits = maxbits;
    let mut n = 0usize;
    let mut k = INT_PLANES;
    let mut data = [0u32; BLOCK_VALUES];
    while bits > 0 && k > kmin {
        k -= 1;
        let m = (n as u64).min(bits) as u32;
        bits -= m as u64;
        let mut x = r.read_bits(m)?;
        while n < BLOCK_VALUES && bits > 0 {
            bits -= 1;
            if !r.read_bit()? {
                break;
            }
            while n < BLOCK_VALUES - 1 && bits > 0 {
                bits -= 1;
                if r.read_bit()? {
                    break;
                }
                n += 1;
            }
            x |= 1u64 << n;
            n += 1;
        }
        while x != 0 {
            let i = x.trailing_zeros() as usize;
            data[i] |= 1 << k;
            x &= x - 1;
        }
    }
    Ok(data)
}

fn write_exponent(w: &mut BitWriter, emax: i32) {
    w.write_bits((emax + EXP_BIAS) as u64, EXP_BITS);
}

fn read_exponent(r: &mut BitReader<'_>) -> Result<i32, OutOfBits> {
    Ok(r.read_bits(EXP_BITS)? as i32 - EXP_BIAS)
}

/// Fixed rate: exactly `budget` bits.
pub fn encode_rate(w: &mut BitWriter, block: &BlockInput, budget: u64) {
    let start = w.bit_len();
    let max = block.max_abs();
    if max == 0.0 {
        w.write_bit(false);
    } else {
        w.write_bit(true);
        let emax = exponent(max);
        write_exponent(w, emax);
        let coeffs = forward(&block.values, emax);
        encode_ints(w, budget - RATE_HEADER_BITS, INT_PLANES, &coeffs);
    }
    w.pad_to(start + budget);
}

pub fn decode_rate(r: &mut BitReader<'_>, budget: u64) -> Result<Block, OutOfBits> {
    let start = r.position();
    let out = if r.read_bit()? {
        let emax = read_exponent(r)?;
        let coeffs = decode_ints(r, budget - RATE_HEADER_BITS, INT_PLANES)?;
        inverse(&coeffs, emax)
    } else {
        [0.0; BLOCK_VALUES]
    };
    if start + budget > r.position() {
        // Trailing padding must still be present in the payload.
        r.seek(start + budget - 1);
        r.read_bit()?;
    }
    Ok(out)
}

/// Fixed precision: at most `planes` bit planes. Among `0..=planes` the
/// plane count with the smallest block error is kept, so the error can only
/// shrink as `planes` grows.
pub fn encode_precision(w: &mut BitWriter, block: &BlockInput, planes: u32) {
    let max = block.max_abs();
    if max == 0.0 {
        w.write_bit(false);
        return;
    }
    w.write_bit(true);
    let emax = exponent(max);
    let coeffs = forward(&block.values, emax);
    let mut best = (f64::INFINITY, 0);
    for q in 0..=planes.min(INT_PLANES) {
        let err = block.error(&inverse(&truncate(&coeffs, q), emax), false);
        if err < best.0 {
            best = (err, q);
        }
    }
    write_exponent(w, emax);
    w.write_bits(best.1 as u64, PREC_BITS);
    encode_ints(w, u64::MAX, best.1, &coeffs);
}

pub fn decode_precision(r: &mut BitReader<'_>) -> Result<Block, OutOfBits> {
    if !r.read_bit()? {
        return Ok([0.0; BLOCK_VALUES]);
    }
    decode_transform(r)
}

fn decode_transform(r: &mut BitReader<'_>) -> Result<Block, OutOfBits> {
    let emax = read_exponent(r)?;
    let planes = r.read_bits(PREC_BITS)? as u32;
    let coeffs = decode_ints(r, u64::MAX, planes)?;
    Ok(inverse(&coeffs, emax))
}

const TAG_ZERO: u64 = 0;
const TAG_TRANSFORM: u64 = 1;
const TAG_RAW: u64 = 2;

/// Fixed accuracy: the fewest bit planes whose reconstruction is within
/// `tolerance` of every real sample, checked by decoding. Blocks the
/// transform cannot represent closely enough are stored verbatim. A zero
/// tolerance demands bit-identical reconstruction.
pub fn encode_accuracy(w: &mut BitWriter, block: &BlockInput, tolerance: f64) {
    let exact = tolerance == 0.0;
    let zero_ok = if exact {
        block.valid().all(|i| block.values[i].to_bits() == 0)
    } else {
        block.valid().all(|i| (block.values[i].abs() as f64) <= tolerance)
    };
    if zero_ok || block.all_zero_bits() {
        w.write_bits(TAG_ZERO, 2);
        return;
    }
    let max = block.max_abs();
    let emax = if max > 0.0 { exponent(max) } else { 0 };
    let coeffs = forward(&block.values, emax);
    for q in (0..=INT_PLANES).filter(|_| max > 0.0) {
        let decoded = inverse(&truncate(&coeffs, q), emax);
        if block.error(&decoded, exact) <= tolerance {
            w.write_bits(TAG_TRANSFORM, 2);
            write_exponent(w, emax);
            w.write_bits(q as u64, PREC_BITS);
            encode_ints(w, u64::MAX, q, &coeffs);
            return;
        }
    }
    w.write_bits(TAG_RAW, 2);
    for v in block.values {
        w.write_bits(v.to_bits() as u64, 32);
    }
}

pub fn decode_accuracy(r: &mut BitReader<'_>) -> Result<Block, OutOfBits> {
    match r.read_bits(2)? {
        TAG_ZERO => Ok([0.0; BLOCK_VALUES]),
        TAG_TRANSFORM => decode_transform(r),
        _ => {
            let mut out = [0.0; BLOCK_VALUES];
            for v in &mut out {
                *v = f32::from_bits(r.read_bits(32)? as u32);
            }
            Ok(out)
        }
    }
}
