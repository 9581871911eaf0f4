//! Density file layout (all little-endian):
//!
//! ```text
//! magic      8 bytes  "SO3DENS\x01"
//! rule       u32      attitude quadrature, 0 = spectral, 1 = simpson
//! n_alpha, n_beta, n_gamma        u32 x 3
//! omega_lo   f64 x 3
//! omega_hi   f64 x 3
//! n_w1, n_w2, n_w3                u32 x 3
//! step       u64
//! values     f64 x (attitude nodes * velocity nodes), attitude-major
//! meta_len   u32      optional trailer: length of the UTF-8 metadata text
//! meta       meta_len bytes
//! ```
//!
//! Density spectrum files:
//!
//! ```text
//! magic      8 bytes  "SO3DSPC\x01"
//! omega_lo, omega_hi              f64 x 6
//! n_w1, n_w2, n_w3                u32 x 3
//! spectra    one spectrum file per velocity node, in node order
//! meta_len, meta                  optional trailer as above
//! ```

use std::io::{BufRead, Read, Write};

use super::grid::{DensityGrid, VelocityGrid};
use super::spectrum::DensitySpectrum;
use crate::error::{Error, Result};
use crate::harmonic::{read_f64, read_spectrum, read_u32, write_spectrum, QuadratureRule, So3Quadrature};
use crate::so3::Vec3;

pub const DENSITY_MAGIC: &[u8; 8] = b"SO3DENS\x01";
pub const DENSITY_SPECTRUM_MAGIC: &[u8; 8] = b"SO3DSPC\x01";

/// Longest metadata trailer accepted when reading.
const MAX_META: usize = 1 << 20;

fn write_meta<W: Write>(w: &mut W, meta: &str) -> Result<()> {
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    Ok(())
}

/// Reads the trailer if one follows; `None` at end of input.
fn read_meta<R: Read>(r: &mut R) -> Result<Option<String>> {
    let mut b = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut b[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(Error::Format("truncated metadata length".into())),
            n => got += n,
        }
    }
    let len = u32::from_le_bytes(b) as usize;
    if len > MAX_META {
        return Err(Error::Format(format!("implausible metadata length {len}")));
    }
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)?;
    String::from_utf8(text)
        .map(Some)
        .map_err(|_| Error::Format("metadata is not UTF-8".into()))
}

fn write_velocity<W: Write>(w: &mut W, v: &VelocityGrid) -> Result<()> {
    for x in v.lo().iter().chain(v.hi().iter()) {
        w.write_all(&x.to_le_bytes())?;
    }
    for n in v.counts() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_velocity<R: Read>(r: &mut R) -> Result<VelocityGrid> {
    let mut lo = Vec3::zeros();
    let mut hi = Vec3::zeros();
    for i in 0..3 {
        lo[i] = read_f64(r)?;
    }
    for i in 0..3 {
        hi[i] = read_f64(r)?;
    }
    let mut vc = [0usize; 3];
    for n in vc.iter_mut() {
        *n = read_u32(r)? as usize;
    }
    VelocityGrid::new(lo, hi, vc).map_err(|e| Error::Format(e.to_string()))
}

fn rule_code(rule: QuadratureRule) -> u32 {
    match rule {
        QuadratureRule::Spectral => 0,
        QuadratureRule::Simpson => 1,
    }
}

pub fn write_density<W: Write>(w: &mut W, d: &DensityGrid) -> Result<()> {
    w.write_all(DENSITY_MAGIC)?;
    let q = d.quadrature();
    w.write_all(&rule_code(q.rule()).to_le_bytes())?;
    for n in q.counts() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    write_velocity(w, d.velocity())?;
    w.write_all(&d.step().to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * d.len());
    for x in d.values() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// [`write_density`] followed by a metadata trailer.
pub fn write_density_tagged<W: Write>(w: &mut W, d: &DensityGrid, meta: &str) -> Result<()> {
    write_density(w, d)?;
    write_meta(w, meta)
}

/// Reads a density, ignoring any trailer.
pub fn read_density<R: Read>(r: &mut R) -> Result<DensityGrid> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DENSITY_MAGIC {
        return Err(Error::Format("not a density file (bad magic)".into()));
    }
    let rule = match read_u32(r)? {
        0 => QuadratureRule::Spectral,
        1 => QuadratureRule::Simpson,
        c => return Err(Error::Format(format!("unknown quadrature rule code {c}"))),
    };
    let mut ac = [0usize; 3];
    for n in ac.iter_mut() {
        *n = read_u32(r)? as usize;
    }
    let vel = read_velocity(r)?;
    let mut step = [0u8; 8];
    r.read_exact(&mut step)?;
    let quad = So3Quadrature::new(ac[0], ac[1], ac[2], rule).map_err(|e| Error::Format(e.to_string()))?;
    let len = quad
        .len()
        .checked_mul(vel.len())
        .filter(|&n| n <= 1 << 32)
        .ok_or_else(|| Error::Format("implausible grid size".into()))?;
    let mut bytes = vec![0u8; 8 * len];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DensityGrid::from_values(quad, vel, values, u64::from_le_bytes(step))
}

/// Reads a density and its metadata trailer, if any.
pub fn read_density_tagged<R: Read>(r: &mut R) -> Result<(DensityGrid, Option<String>)> {
    let d = read_density(r)?;
    Ok((d, read_meta(r)?))
}

pub fn write_density_spectrum<W: Write>(w: &mut W, s: &DensitySpectrum, meta: Option<&str>) -> Result<()> {
    w.write_all(DENSITY_SPECTRUM_MAGIC)?;
    write_velocity(w, s.velocity())?;
    for sp in s.spectra() {
        write_spectrum(w, sp)?;
    }
    if let Some(m) = meta {
        write_meta(w, m)?;
    }
    Ok(())
}

pub fn read_density_spectrum<R: Read>(r: &mut R) -> Result<(DensitySpectrum, Option<String>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DENSITY_SPECTRUM_MAGIC {
        return Err(Error::Format("not a density spectrum file (bad magic)".into()));
    }
    let vel = read_velocity(r)?;
    let spectra = (0..vel.len()).map(|_| read_spectrum(r)).collect::<Result<Vec<_>>>()?;
    let s = DensitySpectrum::new(vel, spectra)?;
    Ok((s, read_meta(r)?))
}

/// CSV of the density over attitude nodes at one velocity node:
/// `alpha,beta,gamma,density`.
pub fn write_attitude_slice_csv<W: Write>(w: &mut W, d: &DensityGrid, vel_node: usize) -> Result<()> {
    if vel_node >= d.velocity().len() {
        return Err(Error::param("slice.velocity_node", format!("{vel_node} out of range")));
    }
    let om = d.velocity().node(vel_node);
    writeln!(
        w,
        "# attitude slice at omega = ({}, {}, {}), step {}",
        om[0],
        om[1],
        om[2],
        d.step()
    )?;
    writeln!(w, "alpha,beta,gamma,density")?;
    let q = d.quadrature();
    for a in 0..q.len() {
        let e = q.euler(a);
        writeln!(w, "{},{},{},{}", e.alpha, e.beta, e.gamma, d.value(a, vel_node))?;
    }
    Ok(())
}

/// CSV of the density over velocity nodes at one attitude node:
/// `w1,w2,w3,density`.
pub fn write_velocity_slice_csv<W: Write>(w: &mut W, d: &DensityGrid, att_node: usize) -> Result<()> {
    if att_node >= d.quadrature().len() {
        return Err(Error::param("slice.attitude_node", format!("{att_node} out of range")));
    }
    let e = d.quadrature().euler(att_node);
    writeln!(
        w,
        "# velocity slice at euler313 = ({}, {}, {}), step {}",
        e.alpha,
        e.beta,
        e.gamma,
        d.step()
    )?;
    writeln!(w, "w1,w2,w3,density")?;
    let vel = d.velocity();
    for v in 0..vel.len() {
        let om = vel.node(v);
        writeln!(w, "{},{},{},{}", om[0], om[1], om[2], d.value(att_node, v))?;
    }
    Ok(())
}

/// Reads the last column of a slice CSV written by this module.
pub fn read_slice_csv<R: BufRead>(r: R) -> Result<Vec<[f64; 4]>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.is_empty() || line.starts_with(char::is_alphabetic) {
            continue;
        }
        let mut row = [0.0; 4];
        let mut fields = line.split(',');
        for slot in row.iter_mut() {
            *slot = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("line {}: expected 4 numeric fields", i + 1)))?;
        }
        rows.push(row);
    }
    Ok(rows)
}
