//! Per-document token embeddings: the `docemb` file format and a
//! deterministic synthetic embedder.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DEMB" | version: u16 = 1 | key_len: u32 | key: UTF-8 | n: u32 | d: u32
//!        | n·d f32 values, row-major | crc32: u32
//! ```
//!
//! The CRC-32 (IEEE) covers every byte after the version field up to the
//! checksum itself.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"DEMB";
pub const VERSION: u16 = 1;
pub const EXTENSION: &str = "docemb";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub doc_key: String,
    /// n × d, one row per token.
    pub values: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(doc_key: impl Into<String>, values: Matrix) -> Result<Self> {
        let m = EmbeddingMatrix {
            doc_key: doc_key.into(),
            values,
        };
        m.check()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }

    fn check(&self) -> Result<()> {
        if self.n() == 0 || self.d() == 0 {
            return Err(Error::Precondition(format!(
                "embedding matrix for `{}` is {}x{}",
                self.doc_key,
                self.n(),
                self.d()
            )));
        }
        if !self.values.is_finite() {
            return Err(Error::NonFinite(self.doc_key.clone()));
        }
        Ok(())
    }
}

/// Writes `m` in the docemb layout, returning the number of bytes written.
pub fn write_docemb<W: Write>(m: &EmbeddingMatrix, mut sink: W) -> Result<usize> {
    m.check()?;
    let key = m.doc_key.as_bytes();
    let mut body = Vec::with_capacity(12 + key.len() + 4 * m.values.len());
    body.extend_from_slice(&(key.len() as u32).to_le_bytes());
    body.extend_from_slice(key);
    body.extend_from_slice(&(m.n() as u32).to_le_bytes());
    body.extend_from_slice(&(m.d() as u32).to_le_bytes());
    for &v in m.values.as_slice() {
        body.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&body);

    sink.write_all(&MAGIC)?;
    sink.write_all(&VERSION.to_le_bytes())?;
    sink.write_all(&body)?;
    sink.write_all(&crc.to_le_bytes())?;
    Ok(MAGIC.len() + 2 + body.len() + 4)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated(format!("reading {what} at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_docemb<R: Read>(mut source: R) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_docemb(&bytes)
}

pub fn decode_docemb(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let body_start = cur.pos;
    let key_len = cur.u32("key length")? as usize;
    let key = cur.take(key_len, "doc key")?;
    let n = cur.u32("n")? as usize;
    let d = cur.u32("d")? as usize;
    let raw = cur.take(
        n.checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::Truncated("matrix size overflows".into()))?,
        "values",
    )?;
    let body_end = cur.pos;
    let stored = cur.u32("checksum")?;
    let computed = crc32fast::hash(&bytes[body_start..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let doc_key = String::from_utf8(key.to_vec()).map_err(|_| Error::Truncated("doc key is not UTF-8".into()))?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    EmbeddingMatrix::new(doc_key, Matrix::from_vec(n, d, values)?)
}

/// `<doc_key>.docemb` with every character outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn docemb_file_name(doc_key: &str) -> String {
    let clean: String = doc_key
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{clean}.{EXTENSION}")
}

pub fn docemb_path(dir: &Path, doc_key: &str) -> PathBuf {
    dir.join(docemb_file_name(doc_key))
}

pub fn save_docemb(dir: &Path, m: &EmbeddingMatrix) -> Result<PathBuf> {
    let path = docemb_path(dir, &m.doc_key);
    let file = std::fs::File::create(&path)?;
    let mut w = std::io::BufWriter::new(file);
    write_docemb(m, &mut w)?;
    w.flush()?;
    Ok(path)
}

pub fn load_docemb(dir: &Path, doc_key: &str) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(docemb_path(dir, doc_key))?;
    decode_docemb(&bytes)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Half-width of the context window hashed into each row.
pub const SYNTH_WINDOW: usize = 2;

/// Deterministic stand-in for an encoder.
///
/// Row `i` depends only on `seed`, `d`, the position `i` and the texts of
/// tokens `i-2..=i+2`. Only integer hashing is involved, so the output is
/// identical on every platform. Values lie in `[-1, 1)`.
pub fn synthetic_embed(doc: &Document, d: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if d == 0 {
        return Err(Error::Precondition("embedding width must be positive".into()));
    }
    let n = doc.len();
    let mut values = Matrix::zeros(n, d);
    for i in 0..n {
        let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
        h = fnv1a(h, &(i as u64).to_le_bytes());
        for offset in 0..=2 * SYNTH_WINDOW {
            let text = (i + offset)
                .checked_sub(SYNTH_WINDOW)
                .and_then(|j| doc.tokens.get(j))
                .map(|t| t.text.as_bytes());
            match text {
                Some(t) => {
                    h = fnv1a(h, &(t.len() as u64).to_le_bytes());
                    h = fnv1a(h, t);
                }
                None => h = fnv1a(h, &u64::MAX.to_le_bytes()),
            }
        }
        for (j, v) in values.row_mut(i).iter_mut().enumerate() {
            let bits = splitmix64(h ^ splitmix64(j as u64));
            *v = (bits >> 11) as f64 * (2.0 / (1u64 << 53) as f64) - 1.0;
        }
    }
    EmbeddingMatrix::new(doc.doc_key.clone(), values)
}
