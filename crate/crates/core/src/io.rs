//! Hashing and packed-array helpers shared by the pool and solution files.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sha2::{Digest, Sha256};

use crate::error::{LsfError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Little-endian f64 array as base64.
pub fn pack_f64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn unpack_f64(encoded: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(encoded)
        .map_err(|e| LsfError::Format(format!("bad base64 array: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(LsfError::Format(format!("packed array length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Hash of a sequence of f64 values by their exact bit patterns.
pub fn hash_f64(values: impl IntoIterator<Item = f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_round_trip_is_bit_exact() {
        let v = vec![0.0, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -7.25];
        let back = unpack_f64(&pack_f64(&v)).unwrap();
        assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), back.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_truncated_payload() {
        assert!(unpack_f64(&STANDARD.encode([1u8, 2, 3])).is_err());
    }
}
