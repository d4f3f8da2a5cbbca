//! Secrets, hash locks, signatures, secret-chain derivation and proof circuits.

pub mod circuit;
pub mod hash;
pub mod secret;
pub mod secret_chain;
pub mod sig;

pub use circuit::{
    prepare_instance, prove, unlock_intermediary_instance, unlock_terminal_instance,
    verify_proof, CircuitKind, Proof, ProofBackend, Statement, TransparentBackend, Value,
    Witness,
};
pub use hash::{amount_digest, sha256, HashLock};
pub use secret::Secret256;
pub use secret_chain::{compute_locks, derive_secret_chain, LockSet, SecretChain};
pub use sig::{sign, verify_sig, KeyPair, PublicKey, Signature};
