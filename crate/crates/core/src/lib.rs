//! Cross-chain channel settlement over simulated blockchains. Payments lock
//! funds in draining dual-lock escrows whose refunds can be appealed.

pub mod chain;
pub mod channel;
pub mod crypto;
pub mod error;
pub mod escrow;
pub mod harness;
pub mod orchestrator;
