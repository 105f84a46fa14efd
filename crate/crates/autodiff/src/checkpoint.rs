//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TFWT" | version: u32 | count: u32 |
//!   count x ( name_len: u32 | name: utf-8 | rank: u32 | dims: rank x u32 | data: f32 x prod(dims) ) |
//! sha256 of every preceding byte (32 bytes)
//! ```

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::param::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TFWT";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ContainerError {
    #[error("not a weight container (bad magic bytes)")]
    BadMagic,
    #[error("container version {found} is not supported (expected {CONTAINER_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("checksum mismatch: container is corrupted")]
    ChecksumMismatch,
    #[error("container truncated")]
    Truncated,
    #[error("malformed container: {0}")]
    Malformed(String),
}

pub fn encode_container(store: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.scalar_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Hex SHA-256 of an encoded container; identifies a model build.
pub fn container_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).ok_or(ContainerError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(ContainerError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_container(bytes: &[u8]) -> Result<ParamStore<f32>, ContainerError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    if bytes.len() < 12 + 32 {
        return Err(ContainerError::Truncated);
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ContainerError::ChecksumMismatch);
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(ContainerError::VersionMismatch { found: version });
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| ContainerError::Malformed(e.to_string()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or(ContainerError::Truncated)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| ContainerError::Malformed(e.to_string()))?;
        if store.find(&name).is_some() {
            return Err(ContainerError::Malformed(format!("duplicate tensor {name}")));
        }
        store.insert(name, t);
    }
    if r.pos != body.len() {
        return Err(ContainerError::Malformed("trailing bytes".into()));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.insert(
            "w",
            Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-7, -0.0]).unwrap(),
        );
        s.insert("b", Tensor::new(vec![3], vec![0.5, 0.25, f32::MIN_POSITIVE]).unwrap());
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let bytes = encode_container(&s);
        assert_eq!(&bytes[..4], b"TFWT");
        let back = decode_container(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        for ((_, n1, t1), (_, n2, t2)) in s.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let a: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = encode_container(&sample());
        bytes[20] ^= 0x01;
        assert_eq!(decode_container(&bytes).unwrap_err(), ContainerError::ChecksumMismatch);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let bytes = encode_container(&sample());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert_eq!(decode_container(&wrong).unwrap_err(), ContainerError::BadMagic);
        assert!(decode_container(&bytes[..10]).is_err());
    }

    #[test]
    fn version_is_checked_after_checksum() {
        let mut body = encode_container(&sample());
        body.truncate(body.len() - 32);
        body[4..8].copy_from_slice(&7u32.to_le_bytes());
        let digest = Sha256::digest(&body);
        body.extend_from_slice(&digest);
        assert_eq!(
            decode_container(&body).unwrap_err(),
            ContainerError::VersionMismatch { found: 7 }
        );
    }

    #[test]
    fn empty_store_round_trips() {
        let bytes = encode_container(&ParamStore::new());
        assert!(decode_container(&bytes).unwrap().is_empty());
    }
}
