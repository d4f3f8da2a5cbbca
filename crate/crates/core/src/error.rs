use thiserror::Error;

use crate::crypto::CircuitKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid hop count: a path needs at least one hop")]
    InvalidHopCount,
    #[error("secret chain invariant violated: {0}")]
    ChainInvariant(String),
    #[error("encoding error: {0}")]
    Encoding(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("{kind}: unsatisfied constraint `{constraint}`")]
    UnsatisfiedConstraint {
        kind: CircuitKind,
        constraint: &'static str,
    },
    #[error("malformed statement: {0}")]
    MalformedStatement(String),
    #[error("proving key does not match backend or schema version")]
    KeyMismatch,
}

/// Rejections from escrow and channel contract execution.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("insufficient funds: have {have}, need {need}")]
    InsufficientFunds { have: u64, need: u64 },
    #[error("insufficient available funds: available {available}, requested {requested}")]
    InsufficientAvailable { available: u64, requested: u64 },
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("caller is not authorized for this operation")]
    Unauthorized,
    #[error("operation not allowed in state {0}")]
    WrongState(String),
    #[error("timelock has expired")]
    Timeout,
    #[error("timelock has not expired yet")]
    TooEarly,
    #[error("appeal window closed")]
    WindowClosed,
    #[error("hash lock mismatch")]
    HashMismatch,
    #[error("secondary lock absent on terminal escrow")]
    NoSecondaryLock,
    #[error("proof rejected")]
    BadProof,
    #[error("amount {requested} exceeds bound {bound}")]
    AmountOverBound { requested: u64, bound: u64 },
    #[error("stale sequence number {got}, need above {current}")]
    StaleSeq { got: u64, current: u64 },
    #[error("invalid signature")]
    BadSignature,
    #[error("balances do not match deposits")]
    BalanceMismatch,
    #[error("unknown escrow {0}")]
    UnknownEscrow(u64),
    #[error("unknown channel {0}")]
    UnknownChannel(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown sender {0}")]
    UnknownSender(String),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}
