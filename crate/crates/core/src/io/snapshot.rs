//! Binary snapshot layout, all little-endian:
//!
//! | bytes      | field                                 |
//! |------------|---------------------------------------|
//! | 4          | magic `NSNL`                          |
//! | 4          | format version (u32)                  |
//! | 4          | dimension count (u32)                 |
//! | 16 per dim | point count (u64), box length (f64)   |
//! | 8          | time (f64)                            |
//! | 8          | mass ratio M/μ (f64)                  |
//! | 16 per pt  | re, im (f64, f64), row-major          |
//! | 4          | CRC32 of the payload bytes            |

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{make_grid, ComplexField};
use crate::wavefield::WaveField;

pub const MAGIC: &[u8; 4] = b"NSNL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotFile {
    pub state: WaveField,
    pub mass_ratio: f64,
}

pub fn write_snapshot(wf: &WaveField, mass_ratio: f64) -> Vec<u8> {
    let grid = wf.grid();
    let mut out = Vec::with_capacity(32 + 16 * grid.ndim() + 16 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.ndim() as u32).to_le_bytes());
    for (n, l) in grid.dims() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&wf.time.to_le_bytes());
    out.extend_from_slice(&mass_ratio.to_le_bytes());
    let start = out.len();
    for z in wf.psi.as_slice() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::TruncatedPayload(format!("file ends inside {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn read_snapshot(bytes: &[u8]) -> Result<SnapshotFile> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic").map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let ndim = c.u32("dimension count")? as usize;
    if !(1..=2).contains(&ndim) {
        return Err(Error::UnsupportedDimension(ndim));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let n = c.u64("axis header")?;
        let l = c.f64("axis header")?;
        dims.push((usize::try_from(n).map_err(|_| Error::NonPowerOfTwo(usize::MAX))?, l));
    }
    let time = c.f64("time")?;
    let mass_ratio = c.f64("mass ratio")?;
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &(n, _)| acc.checked_mul(n))
        .and_then(|t| t.checked_mul(16))
        .ok_or_else(|| Error::TruncatedPayload("declared size overflows".into()))?;
    let remaining = bytes.len() - c.pos;
    if remaining != total + 4 {
        return Err(Error::TruncatedPayload(format!(
            "header declares {total} payload bytes plus checksum, file has {remaining}"
        )));
    }
    let grid = make_grid(&dims)?;
    let payload = c.take(total, "payload")?;
    let stored = c.u32("checksum")?;
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let data = payload
        .chunks_exact(16)
        .map(|b| {
            Complex64::new(
                f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(b[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    let mut state = WaveField::new(ComplexField::new(grid, data)?);
    state.time = time;
    Ok(SnapshotFile { state, mass_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(ndim: usize, seed: u64) -> WaveField {
        let dims = vec![(8usize, 3.0); ndim];
        let grid = make_grid(&dims).unwrap();
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let data = (0..grid.len())
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                Complex64::new(f64::from_bits(x >> 2), -(x as f64) / 3.0)
            })
            .collect();
        let mut wf = WaveField::new(ComplexField::new(grid, data).unwrap());
        wf.time = 0.125 + seed as f64;
        wf
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(seed in any::<u64>(), ndim in 1usize..=2, ratio in -1e3f64..1e3) {
            let wf = field(ndim, seed);
            let bytes = write_snapshot(&wf, ratio);
            let back = read_snapshot(&bytes).unwrap();
            prop_assert_eq!(back.mass_ratio.to_bits(), ratio.to_bits());
            prop_assert_eq!(back.state.time.to_bits(), wf.time.to_bits());
            for (a, b) in back.state.psi.as_slice().iter().zip(wf.psi.as_slice()) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
            prop_assert_eq!(write_snapshot(&back.state, back.mass_ratio), bytes);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = write_snapshot(&field(1, 7), 2.0);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(&bad), Err(Error::BadMagic)));
        assert!(matches!(read_snapshot(b"NS"), Err(Error::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_snapshot(&bad), Err(Error::VersionMismatch { found: 9, .. })));

        // declare 16 points on an 8-point payload
        let mut bad = bytes.clone();
        bad[12] = 16;
        assert!(matches!(read_snapshot(&bad), Err(Error::TruncatedPayload(_))));
        assert!(matches!(read_snapshot(&bytes[..bytes.len() - 5]), Err(Error::TruncatedPayload(_))));

        let mut bad = bytes.clone();
        let mid = bytes.len() - 20;
        bad[mid] ^= 1;
        assert!(matches!(read_snapshot(&bad), Err(Error::ChecksumMismatch { .. })));
    }
}
