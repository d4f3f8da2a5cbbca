use std::fmt;
use std::ops::{BitAnd, BitXor, Not};

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::hash::{sha256, HashLock};
use crate::error::CryptoError;

/// A 256-bit secret or offset. Encoded as 32 raw bytes, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Secret256(pub [u8; 32]);

impl Secret256 {
    pub const ZERO: Secret256 = Secret256([0u8; 32]);
    pub const ONES: Secret256 = Secret256([0xffu8; 32]);

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Secret256(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        Ok(Secret256(decode32(s)?))
    }

    /// Flips a single bit, `bit` in `0..256`, most significant bit of byte 0 first.
    pub fn flip_bit(&self, bit: usize) -> Self {
        let mut out = self.0;
        out[bit / 8] ^= 0x80 >> (bit % 8);
        Secret256(out)
    }

    pub fn lock(&self) -> HashLock {
        HashLock(sha256(&self.0))
    }
}

pub(crate) fn decode32(s: &str) -> Result<[u8; 32], CryptoError> {
    let bytes = hex::decode(s).map_err(|_| CryptoError::Encoding(format!("bad hex: {s}")))?;
    bytes
        .try_into()
        .map_err(|_| CryptoError::Encoding("expected 32 bytes".into()))
}

impl BitXor for Secret256 {
    type Output = Secret256;
    fn bitxor(self, rhs: Self) -> Self {
        let mut out = [0u8; 32];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(rhs.0.iter())) {
            *o = a ^ b;
        }
        Secret256(out)
    }
}

impl BitAnd for Secret256 {
    type Output = Secret256;
    fn bitand(self, rhs: Self) -> Self {
        let mut out = [0u8; 32];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(rhs.0.iter())) {
            *o = a & b;
        }
        Secret256(out)
    }
}

impl Not for Secret256 {
    type Output = Secret256;
    fn not(self) -> Self {
        let mut out = self.0;
        out.iter_mut().for_each(|b| *b = !*b);
        Secret256(out)
    }
}

impl fmt::Debug for Secret256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Secret256({})", self.to_hex())
    }
}

impl fmt::Display for Secret256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Secret256 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Secret256 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Secret256::from_hex(&s).map_err(serde::de::Error::custom)
    }
}
