//! `VEMB` embedding files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                 |
//! |--------|------|-----------------------|
//! | 0      | 4    | magic `b"VEMB"`       |
//! | 4      | 4    | version (u32) = 1     |
//! | 8      | 4    | dtype (u32), 0 = f32  |
//! | 12     | 8    | row count (u64)       |
//! | 20     | 4    | dim (u32)             |
//! | 24     | ...  | count × dim f32 LE    |
//!
//! Rows are written exactly as given; normalization is a separate ingest step.

use std::path::Path;

use crate::matrix::EmbeddingMatrix;

use super::{create_parent, StoreError};

pub const EMB_MAGIC: [u8; 4] = *b"VEMB";
pub const EMB_VERSION: u32 = 1;
pub const EMB_HEADER_LEN: usize = 24;
const DTYPE_F32: u32 = 0;

pub fn encode_emb(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMB_HEADER_LEN + matrix.as_slice().len() * 4);
    out.extend_from_slice(&EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&(matrix.len() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.dim() as u32).to_le_bytes());
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn format_err(offset: usize, reason: impl Into<String>) -> StoreError {
    StoreError::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn decode_emb(bytes: &[u8]) -> Result<EmbeddingMatrix, StoreError> {
    if bytes.len() < EMB_HEADER_LEN {
        return Err(format_err(
            bytes.len(),
            format!("truncated header: {} of {EMB_HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if bytes[0..4] != EMB_MAGIC {
        return Err(format_err(
            0,
            format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4])),
        ));
    }
    let version = u32_at(bytes, 4);
    if version != EMB_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let dtype = u32_at(bytes, 8);
    if dtype != DTYPE_F32 {
        return Err(format_err(8, format!("unsupported dtype {dtype}")));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let dim = u32_at(bytes, 20) as usize;
    if dim == 0 {
        return Err(format_err(20, "dim must be at least 1"));
    }
    let payload = (count as u128) * (dim as u128) * 4;
    let available = (bytes.len() - EMB_HEADER_LEN) as u128;
    if payload > available {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: header declares {payload} bytes, {available} present"),
        ));
    }
    if payload < available {
        return Err(format_err(
            EMB_HEADER_LEN + payload as usize,
            format!("{} trailing bytes after payload", available - payload),
        ));
    }
    let data = bytes[EMB_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(EmbeddingMatrix::new(dim, data)?)
}

pub fn write_emb(path: &Path, matrix: &EmbeddingMatrix) -> Result<(), StoreError> {
    create_parent(path)?;
    std::fs::write(path, encode_emb(matrix)).map_err(|e| StoreError::io(path, e))
}

pub fn read_emb(path: &Path) -> Result<EmbeddingMatrix, StoreError> {
    let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
    decode_emb(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn size_arithmetic() {
        let m = EmbeddingMatrix::from_rows(3, &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let bytes = encode_emb(&m);
        // 24-byte header + 2 * 3 * 4 bytes of payload.
        assert_eq!(bytes.len(), 24 + 2 * 3 * 4);
        assert_eq!(bytes.len(), 48);
        assert_eq!(&bytes[0..4], b"VEMB");
    }

    #[test]
    fn seeded_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let data: Vec<f32> = (0..100 * 16).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        let m = EmbeddingMatrix::new(16, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vemb");
        write_emb(&path, &m).unwrap();
        let back = read_emb(&path).unwrap();
        let bits = |m: &EmbeddingMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(std::fs::read(&path).unwrap(), encode_emb(&back));
    }

    #[test]
    fn rejects_bad_headers() {
        let m = EmbeddingMatrix::from_rows(2, &[[1.0, 2.0]]).unwrap();
        let good = encode_emb(&m);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_emb(&bad), Err(StoreError::Format { offset: 0, .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_emb(&bad), Err(StoreError::Format { offset: 4, .. })));

        let mut bad = good.clone();
        bad[8] = 1;
        assert!(matches!(decode_emb(&bad), Err(StoreError::Format { offset: 8, .. })));

        let truncated = &good[..good.len() - 1];
        assert!(matches!(
            decode_emb(truncated),
            Err(StoreError::Format { offset: 31, .. })
        ));

        assert!(matches!(
            decode_emb(&good[..10]),
            Err(StoreError::Format { offset: 10, .. })
        ));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_emb(&long), Err(StoreError::Format { offset: 32, .. })));
    }

    #[test]
    fn does_not_renormalize() {
        let m = EmbeddingMatrix::from_rows(2, &[[3.0, 4.0], [0.0, 0.0]]).unwrap();
        assert_eq!(decode_emb(&encode_emb(&m)).unwrap(), m);
    }

    proptest! {
        #[test]
        fn round_trip_any(dim in 1usize..9, bits in prop::collection::vec(any::<u32>(), 0..64)) {
            let n = bits.len() / dim * dim;
            let data: Vec<f32> = bits[..n].iter().map(|b| f32::from_bits(*b)).collect();
            let m = EmbeddingMatrix::new(dim, data).unwrap();
            let back = decode_emb(&encode_emb(&m)).unwrap();
            prop_assert_eq!(back.dim(), dim);
            prop_assert_eq!(
                back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                bits[..n].to_vec()
            );
        }
    }
}
