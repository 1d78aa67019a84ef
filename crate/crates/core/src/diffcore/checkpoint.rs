//! Flat binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"ARGT"  u32 version
//! u64 record count
//! per record: u64 name length, UTF-8 name,
//!             u64 rank, rank x u64 dims,
//!             product(dims) x f64 values
//! ```

use std::io::{self, Read, Write};
use std::path::Path;

use super::{DiffError, Tensor};

pub const MAGIC: [u8; 4] = *b"ARGT";
pub const VERSION: u32 = 1;

pub fn write_records<W: Write>(mut w: W, records: &[(String, Tensor)]) -> Result<(), DiffError> {
    write_header(&mut w, MAGIC)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for (name, t) in records {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_tensor(&mut w, t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>, DiffError> {
    read_header(&mut r, MAGIC)?;
    let n = read_u64(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..n {
        let name = read_string(&mut r)?;
        let t = read_tensor(&mut r)?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save(path: &Path, records: &[(String, Tensor)]) -> Result<(), DiffError> {
    let f = std::fs::File::create(path)?;
    write_records(io::BufWriter::new(f), records)
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>, DiffError> {
    let f = std::fs::File::open(path)?;
    read_records(io::BufReader::new(f))
}

pub fn write_header<W: Write>(w: &mut W, magic: [u8; 4]) -> io::Result<()> {
    w.write_all(&magic)?;
    w.write_all(&VERSION.to_le_bytes())
}

pub fn read_header<R: Read>(r: &mut R, magic: [u8; 4]) -> Result<(), DiffError> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if m != magic {
        return Err(DiffError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(DiffError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> io::Result<()> {
    w.write_all(&(t.rank() as u64).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    write_f64s(w, t.data())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor, DiffError> {
    let rank = read_u64(r)? as usize;
    if rank > 16 {
        return Err(DiffError::Format(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let data = read_f64s(r, n)?;
    Tensor::new(shape, data)
}

pub fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, DiffError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64, DiffError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_string<R: Read>(r: &mut R) -> Result<String, DiffError> {
    let len = read_u64(r)? as usize;
    if len > 1 << 20 {
        return Err(DiffError::Format(format!("implausible string length {len}")));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| DiffError::Format(e.to_string()))
}

pub fn write_string<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())
}
