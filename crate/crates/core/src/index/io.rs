//! Binary index format, little-endian throughout:
//!
//! ```text
//! magic "IVRQ1\0" | u16 version
//! u32 dims | u32 bits | u32 n_clusters | u64 n_vectors | f32 c_eps | u64 seed
//! then each section as u64 byte length + payload, in order:
//!   rotation          dims * dims f32, row-major
//!   centroids         n_clusters * dims f32 (rotated)
//!   offsets           (n_clusters + 1) u64
//!   msb_codes         u32 words, per cluster interleaved by dimension group
//!   excodes           bytes, per vector ceil(dims * (bits - 1) / 8)
//!   short_factors     3 f32 per vector: add, scale, err
//!   long_factors      2 f32 per vector: add, scale
//!   pids              u64 per vector
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::IvfRabitqIndex;
use crate::clustering::Centroids;
use crate::codec::{excode_bytes_per_vector, words_per_vector, LongFactors, ShortFactors};
use crate::error::{Error, Result};
use crate::linalg::{Rotation, VectorMatrix};

pub const MAGIC: [u8; 6] = *b"IVRQ1\0";
pub const FORMAT_VERSION: u16 = 1;

/// Bytes before the first section.
pub const HEADER_LEN: usize = 6 + 2 + 4 + 4 + 4 + 8 + 4 + 8;
const SECTIONS: usize = 8;

fn write_section<W: Write>(w: &mut W, payload_len: usize, body: impl FnOnce(&mut W) -> std::io::Result<()>) -> Result<()> {
    w.write_all(&(payload_len as u64).to_le_bytes())?;
    body(w)?;
    Ok(())
}

fn put_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f32>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

impl IvfRabitqIndex {
    /// Size in bytes of the serialized index.
    pub fn serialized_size(&self) -> usize {
        let n = self.len();
        let d = self.dims;
        HEADER_LEN
            + SECTIONS * 8
            + 4 * d * d
            + 4 * self.n_clusters() * d
            + 8 * self.offsets.len()
            + 4 * self.msb_words.len()
            + self.excodes.len()
            + 12 * n
            + 8 * n
            + 8 * n
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dims as u32).to_le_bytes())?;
        w.write_all(&(self.bits as u32).to_le_bytes())?;
        w.write_all(&(self.n_clusters() as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.c_eps.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;

        let m = self.rotation.matrix();
        write_section(w, 4 * m.len(), |w| put_f32s(w, m.iter().copied()))?;
        let c = self.centroids.matrix().as_slice();
        write_section(w, 4 * c.len(), |w| put_f32s(w, c.iter().copied()))?;
        write_section(w, 8 * self.offsets.len(), |w| {
            self.offsets.iter().try_for_each(|o| w.write_all(&o.to_le_bytes()))
        })?;
        write_section(w, 4 * self.msb_words.len(), |w| {
            self.msb_words.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
        })?;
        write_section(w, self.excodes.len(), |w| w.write_all(&self.excodes))?;
        write_section(w, 12 * self.short_factors.len(), |w| {
            put_f32s(w, self.short_factors.iter().flat_map(|f| [f.add, f.scale, f.err]))
        })?;
        write_section(w, 8 * self.long_factors.len(), |w| {
            put_f32s(w, self.long_factors.iter().flat_map(|f| [f.add, f.scale]))
        })?;
        write_section(w, 8 * self.pids.len(), |w| {
            self.pids.iter().try_for_each(|p| w.write_all(&p.to_le_bytes()))
        })?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_size());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(6, "header")?;
        if magic != MAGIC {
            return Err(Error::format("header", 0, "bad magic, not an IVF-RaBitQ index"));
        }
        let version = r.u16("header")?;
        if version != FORMAT_VERSION {
            return Err(Error::format("header", 6, format!("unsupported version {version}")));
        }
        let dims = r.u32("header")? as usize;
        let bits = r.u32("header")?;
        let n_k = r.u32("header")? as usize;
        let n = usize::try_from(r.u64("header")?)
            .map_err(|_| Error::format("header", 20, "vector count exceeds platform limits"))?;
        let c_eps = r.f32("header")?;
        let seed = r.u64("header")?;
        if dims == 0 || n_k == 0 || !(1..=8).contains(&bits) {
            return Err(Error::format(
                "header",
                8,
                format!("invalid header values: dims={dims}, bits={bits}, n_clusters={n_k}"),
            ));
        }
        let bits = bits as u8;
        let ex_stride = if bits > 1 { excode_bytes_per_vector(dims, bits) } else { 0 };

        let rotation = r.section("rotation", 4 * dims * dims)?;
        let rotation = Rotation::from_parts(dims, seed.wrapping_add(2), f32s(rotation))?;
        let centroids = r.section("centroids", 4 * n_k * dims)?;
        let centroids = Centroids::new(VectorMatrix::new(n_k, dims, f32s(centroids)).map_err(|e| {
            Error::format("centroids", r.pos as u64, e.to_string())
        })?)?;
        let offsets_at = r.pos as u64;
        let offsets: Vec<u64> = r
            .section("offsets", 8 * (n_k + 1))?
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if offsets[0] != 0
            || offsets[n_k] != n as u64
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::format(
                "offsets",
                offsets_at,
                "offsets must start at 0, end at the vector count and never decrease",
            ));
        }
        let msb_words = r
            .section("msb_codes", 4 * n * words_per_vector(dims))?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let excodes = r.section("excodes", n * ex_stride)?.to_vec();
        let short_factors = f32s(r.section("short_factors", 12 * n)?)
            .chunks_exact(3)
            .map(|f| ShortFactors {
                add: f[0],
                scale: f[1],
                err: f[2],
            })
            .collect();
        let long_factors = f32s(r.section("long_factors", 8 * n)?)
            .chunks_exact(2)
            .map(|f| LongFactors { add: f[0], scale: f[1] })
            .collect();
        let pids = r
            .section("pids", 8 * n)?
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if r.pos != bytes.len() {
            return Err(Error::format(
                "trailer",
                r.pos as u64,
                format!("{} unexpected trailing bytes", bytes.len() - r.pos),
            ));
        }

        Ok(Self {
            dims,
            bits,
            c_eps,
            seed,
            rotation,
            centroids,
            offsets,
            msb_words,
            excodes,
            short_factors,
            long_factors,
            pids,
        })
    }
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(
                section,
                self.pos as u64,
                format!(
                    "truncated: need {len} bytes, {} available",
                    self.bytes.len() - self.pos
                ),
            ));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, section: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, section)?.try_into().unwrap()))
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }

    fn f32(&mut self, section: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    /// Reads a length-prefixed section whose payload must be `expected` bytes.
    fn section(&mut self, name: &str, expected: usize) -> Result<&'a [u8]> {
        let at = self.pos as u64;
        let len = self.u64(name)?;
        if len != expected as u64 {
            return Err(Error::format(
                name,
                at,
                format!("section length {len} does not match expected {expected}"),
            ));
        }
        self.take(expected, name)
    }
}
