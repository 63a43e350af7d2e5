//! Bit-packed binary codes and exhaustive Hamming search.
//!
//! Each code occupies `ceil(d / 8)` bytes. Bit `j` lives in byte `j / 8` at
//! position `j % 8` (least significant first); a set bit means `+1`. Unused
//! trailing bits are always zero.

use std::io::{Read, Write};

use crate::binio;
use crate::data::DataMatrix;
use crate::error::{format_err, invalid, Error, Result};
use crate::net::NetworkParams;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodes {
    bits: usize,
    count: usize,
    packed: Vec<u8>,
}

impl BinaryCodes {
    pub fn bytes_per_code(bits: usize) -> usize {
        bits.div_ceil(8)
    }

    /// Wraps packed bytes, checking length and that padding bits are zero.
    pub fn from_packed(bits: usize, count: usize, packed: Vec<u8>) -> Result<Self> {
        if bits == 0 {
            return Err(invalid("codes need at least one bit"));
        }
        let stride = Self::bytes_per_code(bits);
        if packed.len() != stride * count {
            return Err(format_err(format!(
                "expected {} packed bytes for {count} codes of {bits} bits, got {}",
                stride * count,
                packed.len()
            )));
        }
        if bits % 8 != 0 {
            let mask = !((1u8 << (bits % 8)) - 1);
            if packed.chunks_exact(stride).any(|c| c[stride - 1] & mask != 0) {
                return Err(format_err("non-zero padding bits in packed codes"));
            }
        }
        Ok(Self { bits, count, packed })
    }

    /// Packs sign vectors (`true` for `+1`), one per point.
    pub fn from_signs<S: AsRef<[bool]>>(bits: usize, signs: &[S]) -> Result<Self> {
        let stride = Self::bytes_per_code(bits);
        let mut packed = vec![0u8; stride * signs.len()];
        for (i, s) in signs.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != bits {
                return Err(Error::DimensionMismatch {
                    expected: bits,
                    found: s.len(),
                });
            }
            for (j, &b) in s.iter().enumerate() {
                if b {
                    packed[i * stride + j / 8] |= 1 << (j % 8);
                }
            }
        }
        Self::from_packed(bits, signs.len(), packed)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn packed(&self) -> &[u8] {
        &self.packed
    }

    pub fn code(&self, i: usize) -> &[u8] {
        let stride = Self::bytes_per_code(self.bits);
        &self.packed[i * stride..(i + 1) * stride]
    }

    /// Bit `j` of code `i` (`true` for `+1`).
    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.code(i)[j / 8] >> (j % 8) & 1 == 1
    }

    /// Codes as `±1` vectors.
    pub fn unpack(&self) -> Vec<Vec<i8>> {
        (0..self.count)
            .map(|i| (0..self.bits).map(|j| if self.bit(i, j) { 1 } else { -1 }).collect())
            .collect()
    }

    pub fn distance(&self, i: usize, query: &[u8]) -> u32 {
        hamming(self.code(i), query)
    }

    /// Number of distinct codes.
    pub fn distinct(&self) -> usize {
        let stride = Self::bytes_per_code(self.bits);
        let mut seen: Vec<&[u8]> = self.packed.chunks_exact(stride).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Hamming distance between two packed codes of equal length.
pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let mut total = 0;
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x = u64::from_le_bytes(x.try_into().unwrap());
        let y = u64::from_le_bytes(y.try_into().unwrap());
        total += (x ^ y).count_ones();
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        total += (x ^ y).count_ones();
    }
    total
}

/// `bit j = 1` iff `(W1 x)_j >= 0`, or `(W1 x + b1)_j >= 0` with `use_bias`.
/// `x` must already be scaled by the model's normalizer.
pub fn encode(p: &NetworkParams, x: &DataMatrix, use_bias: bool) -> Result<BinaryCodes> {
    if x.is_empty() {
        return BinaryCodes::from_packed(p.bits(), 0, Vec::new());
    }
    if x.dims() != p.dims() {
        return Err(Error::DimensionMismatch {
            expected: p.dims(),
            found: x.dims(),
        });
    }
    let mut pre = &p.w1 * x.as_matrix();
    if use_bias {
        for mut c in pre.column_iter_mut() {
            c += &p.b1;
        }
    }
    let bits = p.bits();
    let stride = BinaryCodes::bytes_per_code(bits);
    let mut packed = vec![0u8; stride * x.count()];
    for (i, col) in pre.column_iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            if v >= 0.0 {
                packed[i * stride + j / 8] |= 1 << (j % 8);
            }
        }
    }
    BinaryCodes::from_packed(bits, x.count(), packed)
}

/// All base indices ordered by Hamming distance to `query`, ties by index.
pub fn hamming_rank(base: &BinaryCodes, query: &[u8]) -> Vec<usize> {
    let mut buckets = vec![0usize; base.bits + 2];
    let dist: Vec<u32> = (0..base.count).map(|i| base.distance(i, query)).collect();
    for &d in &dist {
        buckets[d as usize + 1] += 1;
    }
    for k in 1..buckets.len() {
        buckets[k] += buckets[k - 1];
    }
    let mut order = vec![0usize; base.count];
    for (i, &d) in dist.iter().enumerate() {
        let slot = &mut buckets[d as usize];
        order[*slot] = i;
        *slot += 1;
    }
    order
}

/// The `i` base codes nearest to `query`, ties broken by ascending index.
pub fn hamming_topk(base: &BinaryCodes, query: &[u8], i: usize) -> Result<Vec<usize>> {
    if query.len() != BinaryCodes::bytes_per_code(base.bits) {
        return Err(Error::DimensionMismatch {
            expected: BinaryCodes::bytes_per_code(base.bits),
            found: query.len(),
        });
    }
    if i == 0 || i > base.count {
        return Err(invalid(format!("cannot retrieve {i} of {} codes", base.count)));
    }
    let mut order = hamming_rank(base, query);
    order.truncate(i);
    Ok(order)
}

const CODES_MAGIC: &[u8; 4] = b"AJBC";

/// `.ajbc`: magic `AJBC`, `u32` bits, `u64` N, then the packed codes.
pub fn write_codes(mut w: impl Write, codes: &BinaryCodes) -> Result<()> {
    w.write_all(CODES_MAGIC)?;
    binio::write_u32(&mut w, binio::to_u32(codes.bits, "bits")?)?;
    binio::write_u64(&mut w, codes.count as u64)?;
    w.write_all(&codes.packed)?;
    Ok(())
}

pub fn read_codes(mut r: impl Read) -> Result<BinaryCodes> {
    binio::expect_magic(&mut r, CODES_MAGIC)?;
    let bits = binio::read_u32(&mut r, "bits")? as usize;
    let count = binio::read_u64(&mut r, "count")? as usize;
    let packed = binio::read_bytes(&mut r, BinaryCodes::bytes_per_code(bits) * count, "codes")?;
    binio::expect_end(&mut r)?;
    BinaryCodes::from_packed(bits, count, packed)
}
