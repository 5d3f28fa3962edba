//! Binary field snapshots.
//!
//! Layout: magic `HSL1`, then little-endian `u32 d`, `u32 N`, `f64 L`,
//! `u8 space` (0 physical, 1 spectral), then `N^d` interleaved `f64` pairs
//! `(re, im)` in row-major centered order.

use std::io::{Read, Write};

use super::{Field, Grid, SpectralField, C64};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HSL1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 1;

/// A decoded snapshot, tagged by the space its samples live in.
#[derive(Clone, Debug)]
pub enum Snapshot {
    Physical(Field),
    Spectral(SpectralField),
}

impl Snapshot {
    pub fn grid(&self) -> &Grid {
        match self {
            Snapshot::Physical(f) => f.grid(),
            Snapshot::Spectral(s) => s.grid(),
        }
    }

    /// The physical field, transforming if the snapshot was spectral.
    pub fn into_field(self) -> Field {
        match self {
            Snapshot::Physical(f) => f,
            Snapshot::Spectral(s) => s.inverse(),
        }
    }
}

fn write_raw<W: Write>(mut w: W, grid: &Grid, flag: u8, values: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.half_len().to_le_bytes());
    buf.push(flag);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_field<W: Write>(w: W, field: &Field) -> Result<()> {
    write_raw(w, field.grid(), 0, field.values())
}

pub fn write_spectral<W: Write>(w: W, spec: &SpectralField) -> Result<()> {
    write_raw(w, spec.grid(), 1, spec.values())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let found = &bytes[..bytes.len().min(4)];
        return Err(Error::Format(format!(
            "bad magic bytes {found:?}, expected {:?} (\"HSL1\")",
            MAGIC
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let dim = u32_at(4) as usize;
    let n = u32_at(8) as usize;
    let half_len = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let flag = bytes[20];
    let grid = Grid::new(dim, n, half_len)
        .map_err(|e| Error::Format(format!("invalid grid in header: {e}")))?;
    let expected = HEADER_LEN + 16 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match header (expected {expected} bytes)",
            bytes.len()
        )));
    }
    let values: Vec<C64> = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    match flag {
        0 => Ok(Snapshot::Physical(Field::new(&grid, values)?)),
        1 => Ok(Snapshot::Spectral(SpectralField::new(&grid, values)?)),
        other => Err(Error::Format(format!("unknown space flag {other}"))),
    }
}
