//! Per-path secret derivation.
//!
//! Chains are indexed `0..=n` and hops `0..n` (hop `i` connects chain `i` to
//! chain `i + 1`). For every hop:
//!
//! * `primary[i + 1] = primary[i] ^ offset[i]`
//! * `secondary[i]   = primary[i] & primary[i + 1]`
//!
//! Only `primary[0]` and the offsets are sampled; everything else is derived.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::hash::HashLock;
use super::secret::Secret256;
use crate::error::CryptoError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretChain {
    hops: usize,
    primary: Vec<Secret256>,
    offsets: Vec<Secret256>,
    secondary: Vec<Secret256>,
}

/// Lock digests for every chain on the path. The terminal chain has no secondary lock.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockSet {
    pub primary: Vec<HashLock>,
    pub secondary: Vec<HashLock>,
}

impl LockSet {
    pub fn all(&self) -> impl Iterator<Item = &HashLock> {
        self.primary.iter().chain(self.secondary.iter())
    }

    pub fn len(&self) -> usize {
        self.primary.len() + self.secondary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primary.is_empty()
    }

    pub fn secondary_for(&self, chain: usize) -> Option<HashLock> {
        self.secondary.get(chain).copied()
    }
}

impl SecretChain {
    pub fn derive<R: RngCore + ?Sized>(hops: usize, rng: &mut R) -> Result<Self, CryptoError> {
        if hops == 0 {
            return Err(CryptoError::InvalidHopCount);
        }
        let first = Secret256::random(rng);
        let offsets = (0..hops).map(|_| Secret256::random(rng)).collect();
        Self::from_parts(first, offsets)
    }

    /// Builds a chain from a forced first secret and offsets.
    pub fn from_parts(first: Secret256, offsets: Vec<Secret256>) -> Result<Self, CryptoError> {
        let hops = offsets.len();
        if hops == 0 {
            return Err(CryptoError::InvalidHopCount);
        }
        let mut primary = Vec::with_capacity(hops + 1);
        primary.push(first);
        for z in &offsets {
            let next = *primary.last().expect("non-empty") ^ *z;
            primary.push(next);
        }
        let secondary = (0..hops).map(|i| primary[i] & primary[i + 1]).collect();
        Ok(SecretChain {
            hops,
            primary,
            offsets,
            secondary,
        })
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn primary(&self, chain: usize) -> Secret256 {
        self.primary[chain]
    }

    pub fn offset(&self, hop: usize) -> Secret256 {
        self.offsets[hop]
    }

    pub fn secondary(&self, hop: usize) -> Secret256 {
        self.secondary[hop]
    }

    pub fn primaries(&self) -> &[Secret256] {
        &self.primary
    }

    pub fn offsets(&self) -> &[Secret256] {
        &self.offsets
    }

    pub fn secondaries(&self) -> &[Secret256] {
        &self.secondary
    }

    pub fn locks(&self) -> LockSet {
        compute_locks(self)
    }

    /// Re-checks every derivation constraint bitwise.
    pub fn validate(&self) -> Result<(), CryptoError> {
        let n = self.hops;
        if self.primary.len() != n + 1 || self.offsets.len() != n || self.secondary.len() != n {
            return Err(CryptoError::ChainInvariant("length mismatch".into()));
        }
        for i in 0..n {
            if self.primary[i + 1] != self.primary[i] ^ self.offsets[i] {
                return Err(CryptoError::ChainInvariant(format!("xor at hop {i}")));
            }
            if self.secondary[i] != self.primary[i] & self.primary[i + 1] {
                return Err(CryptoError::ChainInvariant(format!("and at hop {i}")));
            }
        }
        Ok(())
    }
}

pub fn derive_secret_chain<R: RngCore + ?Sized>(
    hops: usize,
    rng: &mut R,
) -> Result<SecretChain, CryptoError> {
    SecretChain::derive(hops, rng)
}

pub fn compute_locks(chain: &SecretChain) -> LockSet {
    LockSet {
        primary: chain.primary.iter().map(HashLock::of_secret).collect(),
        secondary: chain
            .secondary
            .iter()
            .zip(chain.offsets.iter())
            .map(|(s, z)| HashLock::of_pair(s, z))
            .collect(),
    }
}
