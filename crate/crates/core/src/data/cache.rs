//! Binary dataset cache, same header convention as parameter checkpoints:
//!
//! ```text
//! b"ARGD"  u32 version
//! u64 manifest length, manifest JSON
//! train dataset, test dataset
//! ```
//!
//! A dataset is `u64 n, u64 K, u64 len`, `K` names, `u64` class count and
//! names, `n` u64 labels, then `n * K * len` f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diffcore::checkpoint::{read_f64s, read_header, read_string, read_u64, write_f64s, write_header, write_string};
use crate::diffcore::DiffError;

use super::{DataError, Dataset, DatasetManifest, Splits};

pub const CACHE_MAGIC: [u8; 4] = *b"ARGD";

fn write_dataset<W: Write>(w: &mut W, d: &Dataset) -> std::io::Result<()> {
    for v in [d.len(), d.channels().len(), d.series_len()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for c in d.channels() {
        write_string(w, c)?;
    }
    w.write_all(&(d.classes().len() as u64).to_le_bytes())?;
    for c in d.classes() {
        write_string(w, c)?;
    }
    for &l in d.labels() {
        w.write_all(&(l as u64).to_le_bytes())?;
    }
    write_f64s(w, d.values())
}

fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset, DataError> {
    let n = read_u64(r)? as usize;
    let k = read_u64(r)? as usize;
    let len = read_u64(r)? as usize;
    if k > 1 << 16 || len > 1 << 24 || n > 1 << 32 {
        return Err(DiffError::Format(format!("implausible dataset header {n} x {k} x {len}")).into());
    }
    let channels = (0..k).map(|_| read_string(r)).collect::<Result<Vec<_>, _>>()?;
    let nc = read_u64(r)? as usize;
    if nc > 1 << 16 {
        return Err(DiffError::Format(format!("implausible class count {nc}")).into());
    }
    let classes = (0..nc).map(|_| read_string(r)).collect::<Result<Vec<_>, _>>()?;
    let labels = (0..n)
        .map(|_| read_u64(r).map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let values = read_f64s(r, n * k * len)?;
    Dataset::new(channels, classes, len, values, labels)
}

pub fn write_splits<W: Write>(w: &mut W, s: &Splits) -> Result<(), DataError> {
    let json = serde_json::to_string(&s.manifest).map_err(|e| DataError::Invalid(e.to_string()))?;
    let io = |e: std::io::Error| DataError::Format(DiffError::Io(e));
    write_header(w, CACHE_MAGIC).map_err(io)?;
    write_string(w, &json).map_err(io)?;
    write_dataset(w, &s.train).map_err(io)?;
    write_dataset(w, &s.test).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_splits<R: Read>(r: &mut R) -> Result<Splits, DataError> {
    read_header(r, CACHE_MAGIC)?;
    let json = read_string(r)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&json).map_err(|e| DiffError::Format(format!("manifest: {e}")))?;
    let train = read_dataset(r)?;
    let test = read_dataset(r)?;
    Ok(Splits { train, test, manifest })
}

pub fn save_cache(path: &Path, s: &Splits) -> Result<(), DataError> {
    let f = File::create(path).map_err(|e| DataError::io(path, e))?;
    write_splits(&mut BufWriter::new(f), s)
}

pub fn load_cache(path: &Path) -> Result<Splits, DataError> {
    let f = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_splits(&mut BufReader::new(f)).map_err(|e| match e {
        DataError::Format(inner) => DataError::Invalid(format!("{}: {inner}", path.display())),
        other => other,
    })
}
