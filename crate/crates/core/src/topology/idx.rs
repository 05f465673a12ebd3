//! Reader for the big-endian IDX container used by the MNIST distribution.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn parse_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(path, offset as u64, "truncated header"))
}

/// Parses an `idx3-ubyte` image file into a row-per-image matrix scaled to `[0, 1]`.
pub fn parse_images<S: Scalar>(bytes: &[u8], path: &Path) -> Result<Array2<S>> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(parse_err(
            path,
            0,
            format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let dim = rows * cols;
    let payload = &bytes[16..];
    let expected = count * dim;
    if payload.len() < expected {
        return Err(parse_err(
            path,
            bytes.len() as u64,
            format!("truncated payload: {count} images of {rows}x{cols} need {expected} bytes, found {}", payload.len()),
        ));
    }
    let scale = S::from_f64_lossy(1.0 / 255.0);
    let data: Vec<S> = payload[..expected]
        .iter()
        .map(|&p| S::from_u8(p).unwrap() * scale)
        .collect();
    Ok(Array2::from_shape_vec((count, dim), data).expect("length checked"))
}

/// Parses an `idx1-ubyte` label file.
pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(parse_err(
            path,
            0,
            format!("bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let count = read_u32(bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(parse_err(
            path,
            bytes.len() as u64,
            format!("truncated payload: {count} labels declared, {} present", payload.len()),
        ));
    }
    Ok(payload[..count].iter().map(|&l| l as usize).collect())
}

pub fn read_images<S: Scalar>(path: &Path) -> Result<Array2<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_images(&bytes, path)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&bytes, path)
}
