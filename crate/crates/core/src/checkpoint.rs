//! Parameter checkpoint envelope.
//!
//! ```text
//! magic: 4 bytes | version: u16 = 1 | dims: u32 × (head specific)
//!      | tensors: f64 little-endian, row-major, fixed order | crc32: u32
//! ```
//!
//! The CRC-32 covers every byte after the version field.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(mut sink: W, magic: [u8; 4], dims: &[u32], tensors: &[&Matrix]) -> Result<usize> {
    let mut body = Vec::new();
    for d in dims {
        body.extend_from_slice(&d.to_le_bytes());
    }
    for t in tensors {
        for v in t.as_slice() {
            body.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&body);
    sink.write_all(&magic)?;
    sink.write_all(&VERSION.to_le_bytes())?;
    sink.write_all(&body)?;
    sink.write_all(&crc.to_le_bytes())?;
    Ok(6 + body.len() + 4)
}

/// Reads a checkpoint whose dimension header has `num_dims` entries.
/// `shapes` maps the dimensions to the tensor shapes in file order.
pub fn read_checkpoint<R: Read>(
    mut source: R,
    magic: [u8; 4],
    num_dims: usize,
    shapes: impl FnOnce(&[u32]) -> Result<Vec<(usize, usize)>>,
) -> Result<(Vec<u32>, Vec<Matrix>)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 6 {
        return Err(Error::Truncated("checkpoint header".into()));
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let body = &bytes[6..];
    if body.len() < 4 * num_dims + 4 {
        return Err(Error::Truncated("checkpoint dimensions".into()));
    }
    let dims: Vec<u32> = body[..4 * num_dims]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let shapes = shapes(&dims)?;
    let floats: usize = shapes.iter().map(|(r, c)| r * c).sum();
    let expected = 4 * num_dims + 8 * floats;
    if body.len() < expected + 4 {
        return Err(Error::Truncated("checkpoint tensors".into()));
    }
    let stored = u32::from_le_bytes(body[expected..expected + 4].try_into().unwrap());
    let computed = crc32fast::hash(&body[..expected]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut values = body[4 * num_dims..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let tensors = shapes
        .into_iter()
        .map(|(r, c)| Matrix::from_vec(r, c, values.by_ref().take(r * c).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((dims, tensors))
}
