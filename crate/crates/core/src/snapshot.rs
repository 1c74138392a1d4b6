//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | offset | size      | content                                 |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `SMLF`                            |
//! | 4      | 4         | `u32` format version (1)                |
//! | 8      | 8         | `u64` n                                 |
//! | 16     | 8         | `f64` L                                 |
//! | 24     | 16·n²     | `(f64 re, f64 im)` per site, row-major  |
//!
//! Row-major means site `(i1, i2)` is record `i1·n + i2`, matching
//! [`crate::grid::Field`] storage. Real fields are stored with zero
//! imaginary part.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::grid::{make_grid, ComplexField};

pub const MAGIC: &[u8; 4] = b"SMLF";
pub const VERSION: u32 = 1;
const HEADER: usize = 24;

pub fn encode(f: &ComplexField) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(HEADER + 16 * g.sites());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n() as u64).to_le_bytes());
    out.extend_from_slice(&g.length().to_le_bytes());
    for z in f.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<ComplexField> {
    if bytes.len() < HEADER {
        return Err(LabError::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(LabError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(LabError::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let length = f64_at(bytes, 16);
    let n = usize::try_from(n).map_err(|_| LabError::Format(format!("n = {n} too large")))?;
    let grid = make_grid(n, length)?;
    let expected = HEADER + 16 * grid.sites();
    if bytes.len() != expected {
        return Err(LabError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values = bytes[HEADER..]
        .chunks_exact(16)
        .map(|c| Complex64::new(f64_at(c, 0), f64_at(c, 8)))
        .collect();
    ComplexField::new(grid, values)
}

pub fn write_to<W: Write>(mut w: W, f: &ComplexField) -> Result<()> {
    w.write_all(&encode(f))?;
    Ok(())
}

pub fn read_from<R: Read>(mut r: R) -> Result<ComplexField> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn load(path: &Path) -> Result<ComplexField> {
    decode(&std::fs::read(path)?)
}
