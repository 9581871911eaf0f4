//! Spectrum file layout (all little-endian):
//!
//! ```text
//! magic   8 bytes  "SO3SPEC\x01"
//! L       u32
//! for l in 0..=L: (2l+1)^2 complex entries of P^l, row-major (m outer,
//!                 n inner, both ascending), each as (re: f64, im: f64)
//! ```

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::transform::So3Spectrum;
use crate::error::{Error, Result};

pub const SPECTRUM_MAGIC: &[u8; 8] = b"SO3SPEC\x01";

pub fn write_spectrum<W: Write>(w: &mut W, s: &So3Spectrum) -> Result<()> {
    w.write_all(SPECTRUM_MAGIC)?;
    w.write_all(&(s.bandlimit() as u32).to_le_bytes())?;
    for c in s.coeffs() {
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                let v = c[(i, j)];
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_spectrum<R: Read>(r: &mut R) -> Result<So3Spectrum> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SPECTRUM_MAGIC {
        return Err(Error::Format("not a spectrum file (bad magic)".into()));
    }
    let bandlimit = read_u32(r)? as usize;
    if bandlimit > 1024 {
        return Err(Error::Format(format!("implausible bandlimit {bandlimit}")));
    }
    let mut coeffs = Vec::with_capacity(bandlimit + 1);
    for l in 0..=bandlimit {
        let n = 2 * l + 1;
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let re = read_f64(r)?;
                let im = read_f64(r)?;
                c[(i, j)] = Complex64::new(re, im);
            }
        }
        coeffs.push(c);
    }
    So3Spectrum::from_coeffs(coeffs)
}

/// One line per coefficient: `l m n re im`.
pub fn write_spectrum_text<W: Write>(w: &mut W, s: &So3Spectrum) -> Result<()> {
    writeln!(w, "# l m n re im")?;
    for (l, c) in s.coeffs().iter().enumerate() {
        let li = l as i64;
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                let v = c[(i, j)];
                writeln!(w, "{l} {} {} {} {}", i as i64 - li, j as i64 - li, v.re, v.im)?;
            }
        }
    }
    Ok(())
}
