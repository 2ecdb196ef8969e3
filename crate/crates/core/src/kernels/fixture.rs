//! Fixture files.
//!
//! Embeddings: an 8-byte header of two little-endian `u32` (rows, cols)
//! followed by `rows * cols` little-endian `f32` in row-major order.
//! Corpora: UTF-8 text, one document per line.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::memory::Matrix;

pub fn encode_embeddings(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * m.as_slice().len());
    out.extend((m.rows() as u32).to_le_bytes());
    out.extend((m.cols() as u32).to_le_bytes());
    for x in m.as_slice() {
        out.extend(x.to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 8 {
        return Err(Error::Parse(
            "embedding fixture shorter than its header".into(),
        ));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(0), word(4));
    let body = &bytes[8..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Parse("embedding fixture header overflows".into()))?;
    if body.len() != expected {
        return Err(Error::Parse(format!(
            "embedding fixture declares {rows}x{cols} but carries {} payload bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn read_embeddings(path: &Path) -> Result<Matrix> {
    decode_embeddings(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_embeddings(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, encode_embeddings(m)).map_err(|e| Error::io(path, e))
}

pub fn parse_corpus(text: &str) -> Vec<String> {
    text.lines().map(str::to_owned).collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    Ok(parse_corpus(
        &fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
    ))
}
