//! Versioned binary policy checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes      | content                                  |
//! |------------|------------------------------------------|
//! | 8          | magic `CCBPOLCY`                         |
//! | 4          | format version (`u32`, currently 1)      |
//! | 4          | descriptor length `d` (`u32`)            |
//! | d          | UTF-8 architecture descriptor            |
//! | 8          | parameter count `n` (`u64`)              |
//! | 8 n        | parameters as `f64`                      |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"CCBPOLCY";
pub const VERSION: u32 = 1;

pub fn encode<T: Scalar>(descriptor: &str, params: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + descriptor.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    out
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(String, Vec<T>)> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dlen = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let descriptor = std::str::from_utf8(take(dlen)?)
        .map_err(|_| Error::Checkpoint("descriptor is not UTF-8".into()))?
        .to_string();
    let n = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let body = take(
        n.checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("parameter count overflow".into()))?,
    )?;
    let params = body
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    if take(1).is_ok() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((descriptor, params))
}

/// Writes atomically through a temporary sibling file.
pub fn save<T: Scalar>(path: &Path, descriptor: &str, params: &[T]) -> Result<()> {
    let tmp = path.with_extension("policy.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(descriptor, params))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<(String, Vec<T>)> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_corruption() {
        let bytes = encode("gaussian obs=1 act=1 arch=lstm(2)", &[1.0f64, 2.0]);
        assert!(decode::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f64>(&bad).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode::<f64>(&long).is_err());
        let mut ver = bytes;
        ver[8] = 2;
        assert!(decode::<f64>(&ver).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iter3.policy");
        save(&path, "desc", &[0.25f64, -1e300]).unwrap();
        let (d, p) = load::<f64>(&path).unwrap();
        assert_eq!(d, "desc");
        assert_eq!(p, vec![0.25, -1e300]);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(desc in "[a-z0-9=(),: ]{0,40}", params in prop::collection::vec(any::<f64>(), 0..64)) {
            let (d, p) = decode::<f64>(&encode(&desc, &params)).unwrap();
            prop_assert_eq!(d, desc);
            prop_assert_eq!(p.len(), params.len());
            for (a, b) in p.iter().zip(&params) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
