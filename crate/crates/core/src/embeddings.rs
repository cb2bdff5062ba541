//! Per-frame CNN embedding files.
//!
//! Layout, all integers little-endian:
//!
//! | field        | type              |
//! |--------------|-------------------|
//! | magic        | `b"GAEM"`         |
//! | version      | u32 (= 1)         |
//! | frame count  | u32               |
//! | dimension    | u32 (= 4096)      |
//! | comment len  | u32               |
//! | comment      | UTF-8 bytes       |
//! | values       | f32 × count × dim, frame-major |
//!
//! The comment records free-form provenance such as the network weights used.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 4096;
const MAGIC: &[u8; 4] = b"GAEM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub comment: String,
    /// `frames × dim` values, frame-major.
    pub values: Vec<f32>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::param(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self {
            dim,
            comment: String::new(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    /// Post-ReLU descriptors are never negative.
    pub fn first_negative(&self) -> Option<(usize, usize)> {
        let pos = self.values.iter().position(|&v| v < 0.0 || v.is_nan())?;
        Some((pos / self.dim, pos % self.dim))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.comment.len() as u32).to_le_bytes())?;
        w.write_all(self.comment.as_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };
        if cur.take(4)? != MAGIC {
            return Err(Error::format(path, "not an embeddings file (bad magic)"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let count = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        if dim != EMBEDDING_DIM {
            return Err(Error::format(path, format!("dimension {dim}, expected {EMBEDDING_DIM}")));
        }
        let comment_len = cur.u32()? as usize;
        let comment = String::from_utf8(cur.take(comment_len)?.to_vec())
            .map_err(|_| Error::format(path, "comment is not UTF-8"))?;
        let body = cur.take(count * dim * 4)?;
        if cur.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after embeddings"));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dim, comment, values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub path: &'a Path,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "truncated file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(frames: usize) -> EmbeddingSet {
        let values = (0..frames * EMBEDDING_DIM).map(|i| (i % 97) as f32 * 0.25).collect();
        let mut set = EmbeddingSet::new(EMBEDDING_DIM, values).unwrap();
        set.comment = "alexnet imagenet weights".into();
        set
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let set = sample(3);
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"GAEM");
        let back = EmbeddingSet::read_from(buf.as_slice(), Path::new("e.bin")).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.len(), 3);
        assert_eq!(back.first_negative(), None);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut buf = Vec::new();
        sample(1).write_to(&mut buf).unwrap();
        let p = Path::new("e.bin");
        assert!(EmbeddingSet::read_from(&buf[..buf.len() - 1], p).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(EmbeddingSet::read_from(bad.as_slice(), p).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(EmbeddingSet::read_from(extra.as_slice(), p).is_err());
    }

    #[test]
    fn detects_negative_values() {
        let mut set = sample(2);
        set.values[EMBEDDING_DIM + 5] = -1.0;
        assert_eq!(set.first_negative(), Some((1, 5)));
    }
}
