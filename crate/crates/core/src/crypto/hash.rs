use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::secret::{decode32, Secret256};
use crate::error::CryptoError;

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// A SHA-256 digest used as a hash lock.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HashLock(pub [u8; 32]);

impl HashLock {
    /// `h(s)` over the 32 raw bytes of a primary secret.
    pub fn of_secret(secret: &Secret256) -> Self {
        HashLock(sha256(secret.as_bytes()))
    }

    /// `h(s2, z2)`: SHA-256 over the 64-byte concatenation `s2 || z2`.
    pub fn of_pair(secret: &Secret256, offset: &Secret256) -> Self {
        let mut buf = [0u8; 64];
        buf[..32].copy_from_slice(secret.as_bytes());
        buf[32..].copy_from_slice(offset.as_bytes());
        HashLock(sha256(&buf))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        Ok(HashLock(decode32(s)?))
    }

    pub fn flip_bit(&self, bit: usize) -> Self {
        let mut out = self.0;
        out[bit / 8] ^= 0x80 >> (bit % 8);
        HashLock(out)
    }
}

/// `h(h(s), v)`: binds a lock to an agreed amount. The amount is encoded as a
/// fixed-width 64-bit big-endian integer after the 32 lock bytes.
pub fn amount_digest(lock: &HashLock, amount: u64) -> [u8; 32] {
    let mut buf = [0u8; 40];
    buf[..32].copy_from_slice(lock.as_bytes());
    buf[32..].copy_from_slice(&amount.to_be_bytes());
    sha256(&buf)
}

impl fmt::Debug for HashLock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashLock({})", self.to_hex())
    }
}

impl fmt::Display for HashLock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for HashLock {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for HashLock {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        HashLock::from_hex(&s).map_err(serde::de::Error::custom)
    }
}
