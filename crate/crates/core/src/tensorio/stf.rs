//! Simple Tensor File: an 8-byte magic, two little-endian `u64` dimensions,
//! then `rows * cols` little-endian `f32` values in row-major order.

use std::fs;
use std::io::Read;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STF_MAGIC: [u8; 8] = *b"STF1\0\0\0\0";
pub const STF_HEADER_LEN: usize = 24;

/// Encodes a matrix as STF bytes. Values are narrowed to `f32`.
pub fn encode_stf<S: Scalar>(matrix: &Matrix<S>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(STF_HEADER_LEN + 4 * matrix.len());
    out.extend_from_slice(&STF_MAGIC);
    out.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    for (index, v) in matrix.as_slice().iter().enumerate() {
        let v = v.as_f64() as f32;
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses only the header, returning `(rows, cols)`.
pub fn decode_stf_header(bytes: &[u8], origin: &Path) -> Result<(usize, usize)> {
    if bytes.len() < 8 || bytes[..8] != STF_MAGIC {
        return Err(Error::BadMagic(origin.to_path_buf()));
    }
    if bytes.len() < STF_HEADER_LEN {
        return Err(Error::Truncated {
            path: origin.to_path_buf(),
            expected: STF_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let (rows, cols) = usize::try_from(rows)
        .ok()
        .zip(usize::try_from(cols).ok())
        .filter(|(r, c)| r.checked_mul(*c).and_then(|n| n.checked_mul(4)).is_some())
        .ok_or_else(|| Error::parse(origin.display().to_string(), "dimensions overflow"))?;
    Ok((rows, cols))
}

pub fn decode_stf(bytes: &[u8], origin: &Path) -> Result<Matrix<f32>> {
    let (rows, cols) = decode_stf_header(bytes, origin)?;
    let expected = (STF_HEADER_LEN + rows * cols * 4) as u64;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: origin.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::parse(
            origin.display().to_string(),
            format!("{} trailing bytes after payload", found - expected),
        ));
    }
    let data = bytes[STF_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn write_tensor<S: Scalar>(path: impl AsRef<Path>, matrix: &Matrix<S>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_stf(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Matrix<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_stf(&bytes, path)
}

/// Reads just the dimensions of an STF file.
pub fn read_tensor_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let mut header = Vec::with_capacity(STF_HEADER_LEN);
    fs::File::open(path)
        .and_then(|f| f.take(STF_HEADER_LEN as u64).read_to_end(&mut header))
        .map_err(|e| Error::io(path, e))?;
    decode_stf_header(&header, path)
}
