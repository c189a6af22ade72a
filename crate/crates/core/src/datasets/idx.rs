//! IDX reader for the MNIST distribution files.
//!
//! Layout: two zero bytes, a type code (0x08 = unsigned byte), the number of
//! dimensions, then one big-endian `u32` per dimension and a row-major
//! payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::Tensor;

pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// `[count × rows × cols]`, scaled to `[0, 1]`.
    Images(Tensor),
    Labels(Vec<usize>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset,
            message: format!("header truncated, need 4 bytes, have {}", bytes.len().saturating_sub(offset)),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC && magic != IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("unexpected magic {magic:#010x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        dims.push(read_u32(bytes, 4 + 4 * d)? as usize);
    }
    let header = 4 + 4 * ndims;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format {
            offset: 4,
            message: format!("dimension product overflows: {dims:?}"),
        })?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Format {
            offset: header,
            message: format!("expected {expected} payload bytes, found {}", payload.len()),
        });
    }
    if ndims == 1 {
        Ok(IdxData::Labels(payload.iter().map(|&b| b as usize).collect()))
    } else {
        let data = payload.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(IdxData::Images(Tensor::new(dims, data)?))
    }
}

pub fn read_idx_file(path: &Path) -> Result<IdxData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

/// Encodes unsigned-byte data in IDX form.
pub fn encode_idx(dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_header_dims() {
        // hand-assembled per the format: magic, then 2, 3, 4 as big-endian u32
        let mut bytes = vec![0x00, 0x00, 0x08, 0x03];
        for d in [2u32, 3, 4] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend((0..24u8).map(|v| v * 10));
        match parse_idx(&bytes).unwrap() {
            IdxData::Images(t) => {
                assert_eq!(t.shape(), &[2, 3, 4]);
                assert_eq!(t.data()[1], 10.0 / 255.0);
                assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn label_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 5, 0, 1, 2, 3, 4];
        assert_eq!(parse_idx(&bytes).unwrap(), IdxData::Labels(vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 5, 0, 1, 2, 3];
        match parse_idx(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_magic() {
        assert!(matches!(
            parse_idx(&[0, 0, 9, 1, 0, 0, 0, 0]),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(parse_idx(&[0, 0]), Err(Error::Format { .. })));
    }

    #[test]
    fn overflowing_dims() {
        let mut bytes = vec![0, 0, 8, 3];
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        // on 64-bit the product of three u32::MAX overflows usize
        assert!(matches!(parse_idx(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn encode_round_trip() {
        let bytes = encode_idx(&[3], &[7, 8, 9]);
        assert_eq!(parse_idx(&bytes).unwrap(), IdxData::Labels(vec![7, 8, 9]));
    }
}
