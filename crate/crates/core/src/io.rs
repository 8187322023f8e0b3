//! Flat binary container for fields.
//!
//! Layout (all little-endian): magic `SPDEFLD1`, format version `u32`, then
//! `dim: u64`, `n_space[dim]: u64`, `n_time: u64`, `extent[dim]: f64`,
//! `t_max: f64`, `representation: u8` (0 physical, 1 frequency),
//! `layout: u8` (0 space-only, 1 space-time), `laplacian: u8`
//! (0 spectral, 1 second difference), then the values as interleaved
//! `re, im` `f64` pairs in storage order (time slowest).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Field, LaplacianSymbol, Layout, Representation, SpaceTimeLattice};

const MAGIC: &[u8; 8] = b"SPDEFLD1";
const VERSION: u32 = 1;

pub fn encode_field(f: &Field) -> Vec<u8> {
    let lat = f.lattice();
    let mut out = Vec::with_capacity(64 + 16 * f.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(lat.dim() as u64).to_le_bytes());
    for n in lat.n_space() {
        out.extend_from_slice(&(*n as u64).to_le_bytes());
    }
    out.extend_from_slice(&(lat.n_time() as u64).to_le_bytes());
    for l in lat.extent() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&lat.t_max().to_le_bytes());
    out.push(match f.representation() {
        Representation::Physical => 0,
        Representation::Frequency => 1,
    });
    out.push(match f.layout() {
        Layout::SpaceOnly => 0,
        Layout::SpaceTime => 1,
    });
    out.push(match lat.laplacian() {
        LaplacianSymbol::Spectral => 0,
        LaplacianSymbol::SecondDifference => 1,
    });
    for v in f.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("count does not fit in usize".into()))
    }
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = c.usize()?;
    if dim == 0 || dim > 16 {
        return Err(Error::Format(format!("implausible dimension {dim}")));
    }
    let n_space = (0..dim).map(|_| c.usize()).collect::<Result<Vec<_>>>()?;
    let n_time = c.usize()?;
    let extent = (0..dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let t_max = c.f64()?;
    let representation = match c.u8()? {
        0 => Representation::Physical,
        1 => Representation::Frequency,
        x => return Err(Error::Format(format!("unknown representation tag {x}"))),
    };
    let layout = match c.u8()? {
        0 => Layout::SpaceOnly,
        1 => Layout::SpaceTime,
        x => return Err(Error::Format(format!("unknown layout tag {x}"))),
    };
    let laplacian = match c.u8()? {
        0 => LaplacianSymbol::Spectral,
        1 => LaplacianSymbol::SecondDifference,
        x => return Err(Error::Format(format!("unknown laplacian tag {x}"))),
    };
    let lattice = SpaceTimeLattice::new(extent, n_space, t_max, n_time)?.with_laplacian(laplacian);
    let count = match layout {
        Layout::SpaceOnly => lattice.n_space_total(),
        Layout::SpaceTime => lattice.n_space_total() * lattice.n_slices(),
    };
    if bytes.len() - c.pos != count * 16 {
        return Err(Error::Format(format!(
            "expected {} value bytes, found {}",
            count * 16,
            bytes.len() - c.pos
        )));
    }
    let values = (0..count)
        .map(|_| Ok(Complex64::new(c.f64()?, c.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    Field::from_values(Arc::new(lattice), layout, representation, values)
}

pub fn write_field(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_field(f))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let lat = Arc::new(
            SpaceTimeLattice::new(vec![2.0, 3.0], vec![4, 8], 0.5, 3)
                .unwrap()
                .with_laplacian(LaplacianSymbol::SecondDifference),
        );
        let f = Field::from_fn(lat, Layout::SpaceTime, |t, x| t + x[0] * x[1]).to_frequency();
        let bytes = encode_field(&f);
        let g = decode_field(&bytes).unwrap();
        assert_eq!(f, g);
        assert_eq!(encode_field(&g), bytes);
    }

    #[test]
    fn rejects_truncated_and_corrupt() {
        let lat = Arc::new(SpaceTimeLattice::new_1d(1.0, 4, 1.0, 1).unwrap());
        let f = Field::from_fn(lat, Layout::SpaceOnly, |_, x| x[0]);
        let bytes = encode_field(&f);
        assert!(decode_field(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_field(&bad).is_err());
    }
}
