//! Small shared helpers: checksums, exact float accumulation, bitmap words,
//! and little-endian slice access used by the on-disk formats.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

/// CRC-32 (IEEE 802.3, reflected, init/final 0xFFFFFFFF). Used by frame
/// headers, journal records and meta snapshots.
pub fn crc32(data: &[u8]) -> u32 {
    const fn table() -> [u32; 256] {
        let mut t = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            t[i] = c;
            i += 1;
        }
        t
    }
    const TABLE: [u32; 256] = table();
    let mut c = 0xFFFF_FFFFu32;
    for &b in data {
        c = TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    !c
}

/// Exact f64 accumulator: keeps a vector of non-overlapping partials and
/// rounds once at the end, so the result depends only on the multiset of
/// inputs, not on the order they arrive in. This is what makes float
/// reductions identical across batch sizes and worker interleavings.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let mut x = x;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// Correctly rounded sum of everything added so far.
    pub fn value(&self) -> f64 {
        // Sum from smallest to largest magnitude; partials are non-overlapping
        // so only the boundary between the two largest needs a rounding fix.
        let n = self.partials.len();
        if n == 0 {
            return 0.0;
        }
        let mut total = self.partials[n - 1];
        let mut err = 0.0f64;
        for j in (0..n - 1).rev() {
            let x = total;
            let y = self.partials[j];
            total = x + y;
            err = y - (total - x);
            if err != 0.0 {
                // Round-to-even correction: if the remaining tail pushes the
                // discarded half-ulp over the edge, nudge by one ulp.
                if j > 0 && (err < 0.0) == (self.partials[j - 1] < 0.0) {
                    let candidate = total + 2.0 * err;
                    if candidate - total == 2.0 * err {
                        total = candidate;
                    }
                }
                break;
            }
        }
        let _ = err;
        total
    }
}

/// Number of bytes a bitmap over `len` items occupies.
pub fn bitmap_bytes(len: u64) -> usize {
    ((len + 7) / 8) as usize
}

pub fn bitmap_get(bits: &[u8], i: u64) -> bool {
    bits[(i / 8) as usize] & (1 << (i % 8)) != 0
}

pub fn bitmap_set(bits: &mut [u8], i: u64, v: bool) {
    let byte = &mut bits[(i / 8) as usize];
    if v {
        *byte |= 1 << (i % 8);
    } else {
        *byte &= !(1 << (i % 8));
    }
}

pub fn bitmap_all_zero(bits: &[u8]) -> bool {
    bits.iter().all(|&b| b == 0)
}

pub fn read_u64_le(buf: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(buf[off..off + 8].try_into().unwrap())
}

pub fn write_u64_le(buf: &mut [u8], off: usize, v: u64) {
    buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
}

pub fn read_u32_le(buf: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(buf[off..off + 4].try_into().unwrap())
}

pub fn write_u32_le(buf: &mut [u8], off: usize, v: u32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

/// Read exactly `buf.len()` bytes or report how short the source was.
pub fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                if filled == 0 {
                    return Ok(false);
                }
                return Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    format!("truncated record: got {} of {} bytes", filled, buf.len()),
                ));
            }
            n => filled += n,
        }
    }
    Ok(true)
}

/// Write a file atomically: write to `<path>.tmp`, fsync, rename over `path`.
pub fn atomic_write(path: &Path, data: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn crc32_known_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn exact_sum_cancellation() {
        let mut s = ExactSum::new();
        s.add(1e100);
        s.add(1.0);
        s.add(-1e100);
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn exact_sum_empty() {
        assert_eq!(ExactSum::new().value(), 0.0);
    }

    proptest! {
        #[test]
        fn exact_sum_order_independent(mut xs in proptest::collection::vec(-1e12f64..1e12, 0..60), seed in any::<u64>()) {
            let mut a = ExactSum::new();
            for &x in &xs { a.add(x); }
            // deterministic shuffle
            let mut st = seed;
            for i in (1..xs.len()).rev() {
                st = st.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (st >> 33) as usize % (i + 1);
                xs.swap(i, j);
            }
            let mut b = ExactSum::new();
            for &x in &xs { b.add(x); }
            prop_assert_eq!(a.value().to_bits(), b.value().to_bits());
        }

        #[test]
        fn exact_sum_split_merge(xs in proptest::collection::vec(-1e9f64..1e9, 0..50), cut in 0usize..50) {
            let cut = cut.min(xs.len());
            let mut whole = ExactSum::new();
            for &x in &xs { whole.add(x); }
            let mut left = ExactSum::new();
            for &x in &xs[..cut] { left.add(x); }
            let mut right = ExactSum::new();
            for &x in &xs[cut..] { right.add(x); }
            left.merge(&right);
            prop_assert_eq!(whole.value().to_bits(), left.value().to_bits());
        }
    }

    #[test]
    fn bitmap_roundtrip() {
        let mut b = vec![0u8; bitmap_bytes(70)];
        bitmap_set(&mut b, 0, true);
        bitmap_set(&mut b, 69, true);
        bitmap_set(&mut b, 33, true);
        assert!(bitmap_get(&b, 0) && bitmap_get(&b, 69) && bitmap_get(&b, 33));
        assert!(!bitmap_get(&b, 1));
        bitmap_set(&mut b, 33, false);
        assert!(!bitmap_get(&b, 33));
        assert_eq!(bitmap_bytes(70), 9);
    }
}
