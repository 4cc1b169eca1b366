//! Binary score dumps.
//!
//! Layout, all little endian: magic `RVSF`, `u32` version, `u64` rows,
//! `u64` cols, `u64` d, `u8` dtype (1 = f64), then `rows * cols * d` values
//! in row-major pixel order with the score components contiguous.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ScoreField;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RVSF";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;
const BLOCK: usize = 4096;

pub fn write_score_dump(field: &ScoreField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    for v in [field.rows(), field.cols(), field.dim()] {
        w.write_all(&(v as u64).to_le_bytes()).map_err(io)?;
    }
    w.write_all(&[DTYPE_F64]).map_err(io)?;
    let n = field.len();
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        for v in field.block(start, len) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        start += len;
    }
    w.flush().map_err(io)
}

pub fn read_score_dump(path: impl AsRef<Path>) -> Result<ScoreField> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut header = [0u8; 4 + 4 + 24 + 1];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated score dump header"))?;
    if &header[..4] != MAGIC {
        return Err(Error::format(path, "not a score dump (bad magic)"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported score dump version {version}")));
    }
    let dim = |k: usize| u64::from_le_bytes(header[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes"));
    let (rows, cols, d) = (dim(0), dim(1), dim(2));
    if header[32] != DTYPE_F64 {
        return Err(Error::format(path, format!("unsupported dtype {}", header[32])));
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(d))
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| Error::format(path, "score dump dimensions overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() != count * 8 {
        return Err(Error::format(
            path,
            format!("expected {} data bytes, found {}", count * 8, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ScoreField::from_dense(rows as usize, cols as usize, d as usize, values)
}
