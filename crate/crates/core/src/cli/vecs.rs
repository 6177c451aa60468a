//! `.fvecs` / `.ivecs` files: records of `[i32 d][d x 4-byte value]`,
//! little-endian, with the same `d` in every record.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::VectorMatrix;

/// Row-major `i32` matrix read from or written to an `.ivecs` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMatrix {
    pub rows: usize,
    pub dims: usize,
    pub values: Vec<i32>,
}

impl IdMatrix {
    pub fn row(&self, i: usize) -> &[i32] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }
}

fn parse_records(bytes: &[u8], what: &str) -> Result<(usize, usize, Vec<[u8; 4]>)> {
    if bytes.is_empty() {
        return Ok((0, 0, Vec::new()));
    }
    let word = |at: usize| -> Result<[u8; 4]> {
        bytes
            .get(at..at + 4)
            .map(|b| b.try_into().unwrap())
            .ok_or_else(|| Error::format(what, at as u64, "truncated record"))
    };
    let d = i32::from_le_bytes(word(0)?);
    if d <= 0 {
        return Err(Error::format(what, 0, format!("dimension must be positive, got {d}")));
    }
    let d = d as usize;
    let record = 4 * (d + 1);
    let mut values = Vec::with_capacity(bytes.len() / 4);
    let mut offset = 0;
    while offset < bytes.len() {
        let this = i32::from_le_bytes(word(offset)?);
        if this != d as i32 {
            return Err(Error::format(
                what,
                offset as u64,
                format!("record dimension {this} differs from {d}"),
            ));
        }
        if offset + record > bytes.len() {
            return Err(Error::format(
                what,
                offset as u64,
                format!("truncated record: need {record} bytes, {} left", bytes.len() - offset),
            ));
        }
        for k in 0..d {
            values.push(word(offset + 4 * (k + 1))?);
        }
        offset += record;
    }
    Ok((values.len() / d, d, values))
}

fn write_records(path: &Path, rows: usize, dims: usize, words: impl Iterator<Item = [u8; 4]>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut words = words;
    for _ in 0..rows {
        w.write_all(&(dims as i32).to_le_bytes())?;
        for _ in 0..dims {
            w.write_all(&words.next().expect("row shape"))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<VectorMatrix> {
    let (rows, dims, words) = parse_records(bytes, "fvecs")?;
    if rows == 0 {
        return Err(Error::format("fvecs", 0, "file holds no vectors"));
    }
    VectorMatrix::new(rows, dims, words.into_iter().map(f32::from_le_bytes).collect())
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<IdMatrix> {
    let (rows, dims, words) = parse_records(bytes, "ivecs")?;
    Ok(IdMatrix {
        rows,
        dims,
        values: words.into_iter().map(i32::from_le_bytes).collect(),
    })
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorMatrix> {
    parse_fvecs(&fs::read(path)?)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<IdMatrix> {
    parse_ivecs(&fs::read(path)?)
}

pub fn write_fvecs(path: impl AsRef<Path>, m: &VectorMatrix) -> Result<()> {
    write_records(path.as_ref(), m.rows(), m.dims(), m.as_slice().iter().map(|v| v.to_le_bytes()))
}

pub fn write_ivecs(path: impl AsRef<Path>, m: &IdMatrix) -> Result<()> {
    if m.dims == 0 {
        return Err(Error::invalid("ivecs rows must have at least one value"));
    }
    write_records(path.as_ref(), m.rows, m.dims, m.values.iter().map(|v| v.to_le_bytes()))
}
