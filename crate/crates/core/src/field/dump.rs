//! Raw sample dump.
//!
//! Layout (little endian): `b"UPFN"`, `u32` version, `u32 d`, `d × u32` grid
//! points per axis, `u64` replicate count, `u32` bandwidth count, then
//! `f64` values ordered by replicate, bandwidth, grid node.

use crate::error::{Error, Result};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"UPFN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpHeader {
    pub dims: Vec<u32>,
    pub replicates: u64,
    pub bandwidths: u32,
}

impl DumpHeader {
    fn points(&self) -> usize {
        self.dims.iter().map(|&n| n as usize).product()
    }
}

pub fn write_dump<W: Write>(mut w: W, header: &DumpHeader, values: &[Vec<Vec<f64>>]) -> Result<()> {
    if values.len() as u64 != header.replicates
        || values.iter().any(|r| {
            r.len() != header.bandwidths as usize || r.iter().any(|f| f.len() != header.points())
        })
    {
        return Err(Error::Domain("dump values do not match the header".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.dims.len() as u32).to_le_bytes())?;
    for n in &header.dims {
        w.write_all(&n.to_le_bytes())?;
    }
    w.write_all(&header.replicates.to_le_bytes())?;
    w.write_all(&header.bandwidths.to_le_bytes())?;
    for v in values.iter().flatten().flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_dump<R: Read>(mut r: R) -> Result<(DumpHeader, Vec<Vec<Vec<f64>>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a UPFN dump".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported dump version {version}")));
    }
    let d = read_u32(&mut r)? as usize;
    let dims = (0..d).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let replicates = u64::from_le_bytes(b8);
    let bandwidths = read_u32(&mut r)?;
    let header = DumpHeader {
        dims,
        replicates,
        bandwidths,
    };
    let n = header.points();
    let mut out = Vec::with_capacity(replicates as usize);
    for _ in 0..replicates {
        let mut rep = Vec::with_capacity(bandwidths as usize);
        for _ in 0..bandwidths {
            let mut f = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut b8)?;
                f.push(f64::from_le_bytes(b8));
            }
            rep.push(f);
        }
        out.push(rep);
    }
    Ok((header, out))
}
