use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Field, GridSpec, Spectrum};
use crate::error::{Error, Result};

/// Binary header: 4-byte magic, `n` and `points` as little-endian u32, extent as f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub magic: [u8; 4],
    pub grid: GridSpec,
}

const FIELD_MAGIC: &[u8; 4] = b"FLGR";

impl Header {
    fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.magic)?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&(self.grid.points as u32).to_le_bytes())?;
        w.write_all(&self.grid.extent.to_le_bytes())?;
        Ok(())
    }

    fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let points = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let extent = f64::from_le_bytes(b8);
        Ok(Self { magic, grid: GridSpec::new(n, extent, points)? })
    }
}

/// Writes a header followed by an opaque payload.
pub fn write_values<W: Write>(w: &mut W, magic: [u8; 4], grid: &GridSpec, payload: &[u8]) -> Result<()> {
    Header { magic, grid: *grid }.write(w)?;
    w.write_all(payload)?;
    Ok(())
}

/// Reads a header with the expected magic and the remaining payload.
pub fn read_values<R: Read>(r: &mut R, magic: [u8; 4]) -> Result<(GridSpec, Vec<u8>)> {
    let h = Header::read(r)?;
    if h.magic != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(&h.magic)
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok((h.grid, payload))
}

fn complex_bytes(values: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 16);
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn complex_values(grid: &GridSpec, payload: &[u8]) -> Result<Vec<Complex64>> {
    if payload.len() != grid.len() * 16 {
        return Err(Error::Format(format!("payload of {} bytes for {} samples", payload.len(), grid.len())));
    }
    Ok(payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

pub fn write_field<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    write_values(w, *FIELD_MAGIC, &f.grid, &complex_bytes(&f.values))
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Field> {
    let (grid, payload) = read_values(r, *FIELD_MAGIC)?;
    Field::new(grid, complex_values(&grid, &payload)?)
}

pub fn write_spectrum<W: Write>(w: &mut W, s: &Spectrum) -> Result<()> {
    write_values(w, *FIELD_MAGIC, &s.grid, &complex_bytes(&s.values))
}

pub fn read_spectrum<R: Read>(r: &mut R) -> Result<Spectrum> {
    let (grid, payload) = read_values(r, *FIELD_MAGIC)?;
    Spectrum::new(grid, complex_values(&grid, &payload)?)
}

/// CSV table of one- or two-dimensional samples: coordinates, then real and imaginary parts.
pub fn write_csv<W: Write>(w: &mut W, grid: &GridSpec, values: &[Complex64], frequency: bool) -> Result<()> {
    if grid.n > 2 {
        return Err(Error::BadParam("CSV export is limited to one or two dimensions".into()));
    }
    let name = if frequency { "xi" } else { "x" };
    let coords: Vec<String> = (1..=grid.n).map(|a| format!("{name}{a}")).collect();
    writeln!(w, "{},re,im", coords.join(","))?;
    for (i, v) in values.iter().enumerate() {
        let c = if frequency { grid.xi_at(i) } else { grid.x_at(i) };
        let c: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{},{},{}", c.join(","), v.re, v.im)?;
    }
    Ok(())
}
