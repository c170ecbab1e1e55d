//! Flat little-endian parameter checkpoint format.
//!
//! ```text
//! magic   8 bytes  "CGATCKPT"
//! version u32
//! count   u32
//! repeated count times:
//!   name_len u32, name bytes (UTF-8)
//!   rank u32, dims u64 × rank
//!   payload f64 × prod(dims)
//! ```

use std::io::{Read, Write};

use super::{AdError, Result, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CGATCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> AdError {
    AdError::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(w: &mut W, tensors: &[(String, Tensor)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        for v in t.values() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(AdError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(AdError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|e| AdError::Checkpoint(e.to_string()))?;
        let rank = read_u32(r)? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = dims.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b).map_err(io_err)?;
            values.push(f64::from_le_bytes(b));
        }
        out.push((name, Tensor::new(dims, values)?));
    }
    Ok(out)
}
