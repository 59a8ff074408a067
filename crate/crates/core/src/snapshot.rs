//! Binary spectral snapshots.
//!
//! Layout (little-endian): magic `SNSF1`, `n` as `u32`, time as `f64`, then
//! the three components one after another, each `n³` complex coefficients as
//! interleaved `(re, im)` `f64` pairs in row-major FFT order (`k_x` slowest).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::{DealiasRule, GridSpec};

pub const MAGIC: &[u8; 5] = b"SNSF1";

pub fn write_snapshot(mut out: impl Write, field: &SpectralField, t: f64) -> std::io::Result<()> {
    let n = field.grid().n_points() as u32;
    out.write_all(MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&t.to_le_bytes())?;
    for c in 0..3 {
        for v in field.component(c) {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    out.flush()
}

/// Read a snapshot; the file does not record the dealiasing rule, so the
/// caller supplies it.
pub fn read_snapshot(mut input: impl Read, dealias: DealiasRule, path: &Path) -> Result<(SpectralField, f64)> {
    let mut header = [0u8; 17];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header, expected magic `SNSF1`"))?;
    if &header[..5] != MAGIC {
        return Err(Error::format(path, "bad magic, expected `SNSF1`"));
    }
    let n = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
    let t = f64::from_le_bytes(header[9..17].try_into().unwrap());
    let grid = GridSpec::new(n, dealias).map_err(|e| Error::format(path, e.to_string()))?;
    let mut body = Vec::with_capacity(3 * grid.len() * 16);
    input.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    if body.len() != 3 * grid.len() * 16 {
        return Err(Error::format(
            path,
            format!("expected {} coefficient bytes for n={n}, found {}", 3 * grid.len() * 16, body.len()),
        ));
    }
    let mut chunks = body.chunks_exact(16).map(|b| {
        Complex64::new(
            f64::from_le_bytes(b[..8].try_into().unwrap()),
            f64::from_le_bytes(b[8..].try_into().unwrap()),
        )
    });
    let mut comps: [Vec<Complex64>; 3] = Default::default();
    for c in comps.iter_mut() {
        *c = chunks.by_ref().take(grid.len()).collect();
    }
    Ok((SpectralField::from_components(grid, comps)?, t))
}

pub fn save(path: &Path, field: &SpectralField, t: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_snapshot(BufWriter::new(file), field, t).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, dealias: DealiasRule) -> Result<(SpectralField, f64)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshot(BufReader::new(file), dealias, path)
}
