//! Path persistence.
//!
//! CSV: header `t,w,z`, one row per grid node.
//!
//! Binary cache, all fields little-endian:
//!
//! ```text
//! magic     8 bytes  "STMNPATH"
//! version   u32      1
//! first     i64      grid index of the first node (t_start = first*dt)
//! n_steps   u64
//! dt        f64
//! seed      u64 master, u64 index
//! sigma     f64
//! init_std  f64
//! w         f64 x (n_steps+1)
//! z         f64 x (n_steps+1)
//! innov     f64 x n_steps
//! bridge_up f64 x n_steps
//! bridge_dn f64 x n_steps
//! ```

use std::io::{Read, Write};

use super::{BrownianPath, NoisePath, PathSeed, TimeGrid};
use crate::error::{Error, Result};
use crate::format::num;

pub const MAGIC: &[u8; 8] = b"STMNPATH";
pub const VERSION: u32 = 1;

pub fn write_csv<W: Write>(path: &NoisePath, mut out: W) -> Result<()> {
    writeln!(out, "t,w,z")?;
    for (i, t) in path.grid().times().enumerate() {
        writeln!(out, "{},{},{}", num(t), num(path.w()[i]), num(path.z()[i]))?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(path: &NoisePath, mut out: W) -> Result<()> {
    let grid = path.grid();
    let bm = path.brownian();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&grid.first_index().to_le_bytes())?;
    out.write_all(&(grid.n_steps() as u64).to_le_bytes())?;
    out.write_all(&grid.dt().to_le_bytes())?;
    out.write_all(&bm.seed().master.to_le_bytes())?;
    out.write_all(&bm.seed().index.to_le_bytes())?;
    out.write_all(&path.sigma().to_le_bytes())?;
    out.write_all(&bm.init_std().to_le_bytes())?;
    let [w, innov, up, dn] = bm.raw_parts();
    for arr in [w, path.z(), innov, up, dn] {
        for x in arr {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated path cache: {e}")))?;
    Ok(buf)
}

fn f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| take::<8, _>(r).map(f64::from_le_bytes)).collect()
}

pub fn read_binary<R: Read>(mut r: R) -> Result<NoisePath> {
    if &take::<8, _>(&mut r)? != MAGIC {
        return Err(Error::Format("not a path cache (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let first = i64::from_le_bytes(take(&mut r)?);
    let n = u64::from_le_bytes(take(&mut r)?) as usize;
    let dt = f64::from_le_bytes(take(&mut r)?);
    let master = u64::from_le_bytes(take(&mut r)?);
    let index = u64::from_le_bytes(take(&mut r)?);
    let sigma = f64::from_le_bytes(take(&mut r)?);
    let init_std = f64::from_le_bytes(take(&mut r)?);
    let grid = TimeGrid::from_raw(first, n, dt).map_err(|e| Error::Format(e.to_string()))?;
    let w = f64s(&mut r, n + 1)?;
    let z = f64s(&mut r, n + 1)?;
    let innov = f64s(&mut r, n)?;
    let up = f64s(&mut r, n)?;
    let dn = f64s(&mut r, n)?;
    let bm = BrownianPath::from_raw(grid, PathSeed::new(master, index), w, innov, up, dn, init_std)?;
    Ok(NoisePath::from_parts(bm, sigma, z))
}
