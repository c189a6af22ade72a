//! Versioned little-endian binary container for [`GroupedDataset`].
//!
//! ```text
//! magic       8 bytes  "GRPDSET\0"
//! version     u32      1
//! k_y, k_z    u32, u32
//! n           u64
//! dim         u32
//! observed    u8       1 when attributes are recorded
//! prov_len    u32      followed by prov_len bytes of UTF-8
//! records     n × (y: u32, z: u32 or 0xFFFFFFFF, dim × f64)
//! ```

use std::path::Path;

use crate::datasets::GroupedDataset;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GRPDSET\0";
pub const VERSION: u32 = 1;
const UNOBSERVED: u32 = u32::MAX;

pub fn encode_dataset(dataset: &GroupedDataset) -> Vec<u8> {
    let n = dataset.len();
    let prov = dataset.provenance().as_bytes();
    let mut out = Vec::with_capacity(37 + prov.len() + n * (8 + 8 * dataset.dim()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.k_y() as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.k_z() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(dataset.dim() as u32).to_le_bytes());
    out.push(u8::from(dataset.attributes_observed()));
    out.extend_from_slice(&(prov.len() as u32).to_le_bytes());
    out.extend_from_slice(prov);
    for s in dataset.iter() {
        out.extend_from_slice(&(s.y as u32).to_le_bytes());
        out.extend_from_slice(&s.z.map_or(UNOBSERVED, |z| z as u32).to_le_bytes());
        for v in s.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<GroupedDataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a dataset container".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 8,
            message: format!("unsupported container version {version}"),
        });
    }
    let k_y = r.u32("k_y")? as usize;
    let k_z = r.u32("k_z")? as usize;
    let n_at = r.pos;
    let n = usize::try_from(r.u64("n")?).map_err(|_| Error::Format {
        offset: n_at,
        message: "sample count does not fit in memory".into(),
    })?;
    let dim = r.u32("dim")? as usize;
    let observed = match r.take(1, "observed flag")?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Format {
                offset: r.pos - 1,
                message: format!("observed flag must be 0 or 1, got {other}"),
            })
        }
    };
    let prov_len = r.u32("provenance length")? as usize;
    let prov_at = r.pos;
    let provenance = std::str::from_utf8(r.take(prov_len, "provenance")?)
        .map_err(|e| Error::Format {
            offset: prov_at + e.valid_up_to(),
            message: "provenance is not UTF-8".into(),
        })?
        .to_string();
    let record = dim
        .checked_mul(8)
        .and_then(|b| b.checked_add(8))
        .ok_or_else(|| Error::Format {
            offset: n_at,
            message: "record size overflows".into(),
        })?;
    let remaining = bytes.len() - r.pos;
    if n.checked_mul(record) != Some(remaining) {
        return Err(Error::Format {
            offset: r.pos,
            message: format!("expected {n} records of {record} bytes, found {remaining} bytes"),
        });
    }
    let mut features = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(if observed { n } else { 0 });
    for _ in 0..n {
        ys.push(r.u32("label")? as usize);
        let z_at = r.pos;
        let z = r.u32("attribute")?;
        match (observed, z == UNOBSERVED) {
            (true, false) => zs.push(z as usize),
            (false, true) => {}
            _ => {
                return Err(Error::Format {
                    offset: z_at,
                    message: "attribute observability differs from header".into(),
                })
            }
        }
        for _ in 0..dim {
            features.push(f64::from_le_bytes(r.take(8, "feature")?.try_into().expect("8 bytes")));
        }
    }
    GroupedDataset::new(dim, features, ys, observed.then_some(zs), k_y, k_z, provenance)
}

pub fn write_dataset(path: &Path, dataset: &GroupedDataset) -> Result<()> {
    std::fs::write(path, encode_dataset(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<GroupedDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_toy, ToySpec};

    #[test]
    fn round_trip_bit_exact() {
        let d = gen_toy(&ToySpec::default_with_sigma(-0.4), 50, 8).unwrap();
        assert_eq!(decode_dataset(&encode_dataset(&d)).unwrap(), d);
        let hidden = d.hide_attributes();
        assert_eq!(decode_dataset(&encode_dataset(&hidden)).unwrap(), hidden);
    }

    #[test]
    fn header_layout() {
        let d = gen_toy(&ToySpec::default_with_sigma(0.0), 3, 1).unwrap();
        let bytes = encode_dataset(&d);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 10);
    }

    #[test]
    fn truncation_and_bad_magic() {
        let d = gen_toy(&ToySpec::default_with_sigma(0.0), 4, 1).unwrap();
        let bytes = encode_dataset(&d);
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_dataset(&bytes[..5]), Err(Error::Format { offset: 0, .. })));
    }
}
