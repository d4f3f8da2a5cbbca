//! Dual-lock escrow with a per-block drain.
//!
//! An [`Escrow`] is a pure state machine: every operation validates its
//! preconditions, mutates the ledger and returns the [`Payout`]s the hosting
//! chain must credit. Nothing here touches account balances directly.
//!
//! Ledger, for `L` locked, `U` unlocked, `C` committed:
//!
//! * frozen `F = max(0, L - Uf - r * (h - t0))`, where `Uf` is the part of the
//!   unlock that was drawn from frozen funds;
//! * available `A = L - F - C - U`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{
    sha256, verify_proof, CircuitKind, HashLock, KeyPair, Proof, PublicKey, Secret256,
    Signature, Statement,
};
use crate::error::ContractError;

pub type Address = String;
pub type EscrowId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EscrowState {
    Lock,
    Unlock,
    Refund,
    Appeal,
    Refund2Pending,
}

impl fmt::Display for EscrowState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EscrowState::Lock => "LOCK",
            EscrowState::Unlock => "UNLOCK",
            EscrowState::Refund => "REFUND",
            EscrowState::Appeal => "APPEAL",
            EscrowState::Refund2Pending => "REFUND2_PENDING",
        };
        f.write_str(s)
    }
}

/// `DualLock` has primary and secondary locks; `Htlc` is the classic single-hash baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscrowMode {
    #[default]
    DualLock,
    Htlc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoutRole {
    Beneficiary,
    Commitment,
    Locker,
    Appellant,
    ChannelParty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub to: Address,
    pub amount: u64,
    pub role: PayoutRole,
}

/// A contract-signed IOU drawn against available funds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub index: usize,
    pub snd: Address,
    pub rcv: Address,
    pub amount: u64,
    pub issued_at: u64,
    pub signature: Signature,
    pub honored: bool,
}

#[derive(Serialize)]
struct CommitmentBody<'a> {
    chain: &'a str,
    escrow: EscrowId,
    index: usize,
    snd: &'a str,
    rcv: &'a str,
    amount: u64,
    issued_at: u64,
}

impl Commitment {
    pub fn digest(&self, chain: &str, escrow: EscrowId) -> [u8; 32] {
        let body = CommitmentBody {
            chain,
            escrow,
            index: self.index,
            snd: &self.snd,
            rcv: &self.rcv,
            amount: self.amount,
            issued_at: self.issued_at,
        };
        sha256(&serde_json::to_vec(&body).expect("commitment serializes"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockParams {
    pub locker: Address,
    pub beneficiary: Address,
    pub locker_pk: PublicKey,
    pub beneficiary_pk: PublicKey,
    pub amount: u64,
    pub primary_lock: HashLock,
    pub secondary_lock: Option<HashLock>,
    pub drain_rate: u64,
    pub timelock: u64,
    #[serde(default)]
    pub mode: EscrowMode,
}

/// Credits paid out so far, by role.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credits {
    pub beneficiary: u64,
    pub commitments: u64,
    pub locker: u64,
    pub appellant: u64,
}

impl Credits {
    pub fn total(&self) -> u64 {
        self.beneficiary + self.commitments + self.locker + self.appellant
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Escrow {
    pub id: EscrowId,
    pub locker: Address,
    pub beneficiary: Address,
    pub locker_pk: PublicKey,
    pub beneficiary_pk: PublicKey,
    pub locked: u64,
    pub frozen: u64,
    pub committed: u64,
    pub unlocked: u64,
    pub unlocked_from_frozen: u64,
    pub drain_rate: u64,
    pub lock_height: u64,
    pub timelock: u64,
    pub appeal_deadline: Option<u64>,
    pub primary_lock: HashLock,
    pub secondary_lock: Option<HashLock>,
    pub mode: EscrowMode,
    pub commitments: Vec<Commitment>,
    pub state: EscrowState,
    pub credits: Credits,
}

impl Escrow {
    pub fn open(id: EscrowId, p: LockParams, height: u64) -> Result<Escrow, ContractError> {
        if p.amount == 0 {
            return Err(ContractError::ZeroAmount);
        }
        Ok(Escrow {
            id,
            locker: p.locker,
            beneficiary: p.beneficiary,
            locker_pk: p.locker_pk,
            beneficiary_pk: p.beneficiary_pk,
            locked: p.amount,
            frozen: p.amount,
            committed: 0,
            unlocked: 0,
            unlocked_from_frozen: 0,
            drain_rate: p.drain_rate,
            lock_height: height,
            timelock: p.timelock,
            appeal_deadline: None,
            primary_lock: p.primary_lock,
            secondary_lock: p.secondary_lock,
            mode: p.mode,
            commitments: Vec::new(),
            state: EscrowState::Lock,
            credits: Credits::default(),
        })
    }

    pub fn is_terminal_chain(&self) -> bool {
        self.secondary_lock.is_none()
    }

    fn draining(&self) -> bool {
        matches!(self.state, EscrowState::Lock | EscrowState::Unlock)
    }

    /// Frozen amount the drain schedule gives at `height`.
    pub fn frozen_at(&self, height: u64) -> u64 {
        let drained = self
            .drain_rate
            .saturating_mul(height.saturating_sub(self.lock_height));
        self.locked
            .saturating_sub(self.unlocked_from_frozen)
            .saturating_sub(drained)
    }

    pub fn tick(&mut self, height: u64) {
        if self.draining() {
            self.frozen = self.frozen_at(height);
        }
    }

    pub fn available(&self) -> u64 {
        if !self.draining() {
            return 0;
        }
        self.locked - self.frozen - self.committed - self.unlocked
    }

    /// Funds the contract still holds.
    pub fn held(&self) -> u64 {
        self.locked - self.credits.total()
    }

    pub fn is_settled(&self) -> bool {
        self.held() == 0 && self.state != EscrowState::Lock
    }

    /// Upper bound on an unlock or assisted-refund amount.
    pub fn unlock_bound(&self) -> u64 {
        self.locked - self.committed - self.unlocked
    }

    fn outstanding_commitments(&self) -> u64 {
        self.commitments
            .iter()
            .filter(|c| !c.honored)
            .map(|c| c.amount)
            .sum()
    }

    fn expect_state(&self, allowed: &[EscrowState]) -> Result<(), ContractError> {
        if allowed.contains(&self.state) {
            Ok(())
        } else {
            Err(ContractError::WrongState(self.state.to_string()))
        }
    }

    fn unlock_kind(&self) -> CircuitKind {
        if self.is_terminal_chain() {
            CircuitKind::UnlockTerminal
        } else {
            CircuitKind::UnlockIntermediary
        }
    }

    fn check_unlock_proof(
        &self,
        st: &Statement,
        proof: &Proof,
        signer: &PublicKey,
    ) -> Result<u64, ContractError> {
        let kind = self.unlock_kind();
        if st.kind != kind || proof.kind != kind {
            return Err(ContractError::BadProof);
        }
        if st.digest("lock") != Some(self.primary_lock) {
            return Err(ContractError::HashMismatch);
        }
        if st.signer() != Some(*signer) {
            return Err(ContractError::BadSignature);
        }
        if !verify_proof(kind, st, proof) {
            return Err(ContractError::BadProof);
        }
        let amount = st.amount().ok_or(ContractError::BadProof)?;
        if amount == 0 {
            return Err(ContractError::ZeroAmount);
        }
        let bound = self.unlock_bound();
        if amount > bound {
            return Err(ContractError::AmountOverBound {
                requested: amount,
                bound,
            });
        }
        Ok(amount)
    }

    pub fn check(
        &mut self,
        caller: &str,
        rcv: &str,
        amount: u64,
        height: u64,
        chain: &str,
        contract_key: &KeyPair,
    ) -> Result<Commitment, ContractError> {
        if caller != self.locker {
            return Err(ContractError::Unauthorized);
        }
        self.expect_state(&[EscrowState::Lock, EscrowState::Unlock])?;
        if amount == 0 {
            return Err(ContractError::ZeroAmount);
        }
        let available = self.available();
        if amount > available {
            return Err(ContractError::InsufficientAvailable {
                available,
                requested: amount,
            });
        }
        let mut cmt = Commitment {
            index: self.commitments.len(),
            snd: self.locker.clone(),
            rcv: rcv.to_string(),
            amount,
            issued_at: height,
            signature: Signature(Vec::new()),
            honored: false,
        };
        cmt.signature = contract_key.sign(&cmt.digest(chain, self.id));
        self.committed += amount;
        self.commitments.push(cmt.clone());
        Ok(cmt)
    }

    fn pay_beneficiary(&mut self, amount: u64, height: u64, out: &mut Vec<Payout>) {
        let frozen = self.frozen_at(height);
        let from_frozen = amount.min(frozen);
        self.unlocked += amount;
        self.unlocked_from_frozen += from_frozen;
        self.frozen = frozen - from_frozen;
        self.credits.beneficiary += amount;
        out.push(Payout {
            to: self.beneficiary.clone(),
            amount,
            role: PayoutRole::Beneficiary,
        });
    }

    /// Honors every outstanding commitment, then sends what is left to `rest_to`.
    fn settle(&mut self, rest_to: PayoutRole, appellant: Option<&str>, out: &mut Vec<Payout>) {
        for c in self.commitments.iter_mut().filter(|c| !c.honored) {
            c.honored = true;
            self.credits.commitments += c.amount;
            out.push(Payout {
                to: c.rcv.clone(),
                amount: c.amount,
                role: PayoutRole::Commitment,
            });
        }
        let rest = self.held();
        let to = match rest_to {
            PayoutRole::Appellant => {
                self.credits.appellant += rest;
                appellant.expect("appellant address").to_string()
            }
            _ => {
                self.credits.locker += rest;
                self.locker.clone()
            }
        };
        if rest > 0 {
            out.push(Payout {
                to,
                amount: rest,
                role: rest_to,
            });
        }
        self.frozen = 0;
        debug_assert_eq!(self.outstanding_commitments(), 0);
        debug_assert_eq!(self.held(), 0);
    }

    pub fn unlock(
        &mut self,
        caller: &str,
        st: &Statement,
        proof: &Proof,
        height: u64,
    ) -> Result<Vec<Payout>, ContractError> {
        if self.mode != EscrowMode::DualLock {
            return Err(ContractError::WrongState("htlc escrow".into()));
        }
        if caller != self.beneficiary {
            return Err(ContractError::Unauthorized);
        }
        self.expect_state(&[EscrowState::Lock])?;
        if height >= self.timelock {
            return Err(ContractError::Timeout);
        }
        let signer = self.locker_pk;
        let amount = self.check_unlock_proof(st, proof, &signer)?;
        let mut out = Vec::new();
        self.pay_beneficiary(amount, height, &mut out);
        self.state = EscrowState::Unlock;
        Ok(out)
    }

    pub fn htlc_claim(
        &mut self,
        caller: &str,
        secret: &Secret256,
        height: u64,
    ) -> Result<Vec<Payout>, ContractError> {
        if self.mode != EscrowMode::Htlc {
            return Err(ContractError::WrongState("dual-lock escrow".into()));
        }
        if caller != self.beneficiary {
            return Err(ContractError::Unauthorized);
        }
        self.expect_state(&[EscrowState::Lock])?;
        if height >= self.timelock {
            return Err(ContractError::Timeout);
        }
        if HashLock::of_secret(secret) != self.primary_lock {
            return Err(ContractError::HashMismatch);
        }
        let mut out = Vec::new();
        let amount = self.unlock_bound();
        self.pay_beneficiary(amount, height, &mut out);
        self.state = EscrowState::Unlock;
        self.frozen = 0;
        Ok(out)
    }

    pub fn refund1(&mut self, caller: &str, height: u64) -> Result<Vec<Payout>, ContractError> {
        if caller != self.locker {
            return Err(ContractError::Unauthorized);
        }
        match self.state {
            EscrowState::Unlock => {}
            EscrowState::Lock if self.is_terminal_chain() => {}
            EscrowState::Lock => return Err(ContractError::WrongState("LOCK with secondary lock".into())),
            s => return Err(ContractError::WrongState(s.to_string())),
        }
        if height <= self.timelock {
            return Err(ContractError::TooEarly);
        }
        let mut out = Vec::new();
        self.settle(PayoutRole::Locker, None, &mut out);
        self.state = EscrowState::Refund;
        Ok(out)
    }

    pub fn refund2(
        &mut self,
        caller: &str,
        secret_and: &Secret256,
        offset: &Secret256,
        height: u64,
        appeal_window: u64,
    ) -> Result<(), ContractError> {
        if caller != self.locker {
            return Err(ContractError::Unauthorized);
        }
        self.expect_state(&[EscrowState::Lock])?;
        let secondary = self.secondary_lock.ok_or(ContractError::NoSecondaryLock)?;
        if height <= self.timelock {
            return Err(ContractError::TooEarly);
        }
        if HashLock::of_pair(secret_and, offset) != secondary {
            return Err(ContractError::HashMismatch);
        }
        self.state = EscrowState::Refund2Pending;
        self.appeal_deadline = Some(height + appeal_window);
        self.frozen = 0;
        Ok(())
    }

    pub fn finalize(&mut self, caller: &str, height: u64) -> Result<Vec<Payout>, ContractError> {
        if caller != self.locker {
            return Err(ContractError::Unauthorized);
        }
        self.expect_state(&[EscrowState::Refund2Pending])?;
        let deadline = self.appeal_deadline.expect("pending refund has a deadline");
        if height <= deadline {
            return Err(ContractError::TooEarly);
        }
        let mut out = Vec::new();
        self.settle(PayoutRole::Locker, None, &mut out);
        self.state = EscrowState::Refund;
        Ok(out)
    }

    pub fn appeal(
        &mut self,
        appellant: &str,
        secret: &Secret256,
        height: u64,
    ) -> Result<Vec<Payout>, ContractError> {
        self.expect_state(&[EscrowState::Refund2Pending])?;
        let deadline = self.appeal_deadline.expect("pending refund has a deadline");
        if height > deadline {
            return Err(ContractError::WindowClosed);
        }
        if HashLock::of_secret(secret) != self.primary_lock {
            return Err(ContractError::HashMismatch);
        }
        let mut out = Vec::new();
        self.settle(PayoutRole::Appellant, Some(appellant), &mut out);
        self.state = EscrowState::Appeal;
        Ok(out)
    }

    /// Assisted settlement: the locker unlocks on behalf of an offline beneficiary,
    /// using the beneficiary's own amount signature.
    pub fn refund3(
        &mut self,
        caller: &str,
        st: &Statement,
        proof: &Proof,
        height: u64,
    ) -> Result<Vec<Payout>, ContractError> {
        if self.mode != EscrowMode::DualLock {
            return Err(ContractError::WrongState("htlc escrow".into()));
        }
        if caller != self.locker {
            return Err(ContractError::Unauthorized);
        }
        self.expect_state(&[EscrowState::Lock])?;
        if height <= self.timelock {
            return Err(ContractError::TooEarly);
        }
        let signer = self.beneficiary_pk;
        let amount = self.check_unlock_proof(st, proof, &signer)?;
        let mut out = Vec::new();
        self.pay_beneficiary(amount, height, &mut out);
        self.settle(PayoutRole::Locker, None, &mut out);
        self.state = EscrowState::Refund;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{amount_digest, prove, unlock_intermediary_instance, SecretChain};

    struct Fixture {
        chain: SecretChain,
        alice: KeyPair,
        bob: KeyPair,
        contract: KeyPair,
    }

    fn fixture() -> Fixture {
        Fixture {
            chain: SecretChain::from_parts(Secret256([7; 32]), vec![Secret256([0x3c; 32])])
                .unwrap(),
            alice: KeyPair::from_seed([1; 32]),
            bob: KeyPair::from_seed([2; 32]),
            contract: KeyPair::from_seed([9; 32]),
        }
    }

    fn alpha_escrow(f: &Fixture, amount: u64, rate: u64) -> Escrow {
        let locks = f.chain.locks();
        Escrow::open(
            0,
            LockParams {
                locker: "alice".into(),
                beneficiary: "bob".into(),
                locker_pk: f.alice.public(),
                beneficiary_pk: f.bob.public(),
                amount,
                primary_lock: locks.primary[0],
                secondary_lock: Some(locks.secondary[0]),
                drain_rate: rate,
                timelock: 40,
                mode: EscrowMode::DualLock,
            },
            1,
        )
        .unwrap()
    }

    fn unlock_proof(f: &Fixture, signer: &KeyPair, amount: u64, signed: u64) -> (Statement, Proof) {
        let lock = HashLock::of_secret(&f.chain.primary(0));
        let sig = signer.sign(&amount_digest(&lock, signed));
        let (st, w) = unlock_intermediary_instance(
            lock,
            f.chain.primary(0),
            amount,
            sig,
            signer.public(),
            f.chain.primary(1),
            f.chain.offset(0),
        );
        let proof = match prove(CircuitKind::UnlockIntermediary, &st, &w) {
            Ok(p) => p,
            Err(_) => Proof {
                kind: CircuitKind::UnlockIntermediary,
                backend: "transparent-v1".into(),
                bytes: Vec::new(),
            },
        };
        (st, proof)
    }

    #[test]
    fn drain_reaches_walkthrough_values() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        e.tick(4);
        assert_eq!((e.frozen, e.available()), (27, 3));
        e.tick(41);
        assert_eq!((e.frozen, e.available()), (0, 30));
    }

    #[test]
    fn zero_rate_never_drains() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 0);
        e.tick(1000);
        assert_eq!(e.frozen, 30);
    }

    #[test]
    fn zero_lock_rejected() {
        let f = fixture();
        let res = Escrow::open(
            1,
            LockParams {
                locker: "a".into(),
                beneficiary: "b".into(),
                locker_pk: f.alice.public(),
                beneficiary_pk: f.bob.public(),
                amount: 0,
                primary_lock: f.chain.locks().primary[0],
                secondary_lock: None,
                drain_rate: 1,
                timelock: 5,
                mode: EscrowMode::DualLock,
            },
            0,
        );
        assert_eq!(res.unwrap_err(), ContractError::ZeroAmount);
    }

    #[test]
    fn sequential_checks_respect_available() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        e.tick(4);
        assert!(e.check("alice", "dave", 2, 4, "alpha", &f.contract).is_ok());
        assert_eq!(
            e.check("alice", "dave", 2, 4, "alpha", &f.contract),
            Err(ContractError::InsufficientAvailable {
                available: 1,
                requested: 2
            })
        );
        assert_eq!(
            e.check("bob", "dave", 1, 4, "alpha", &f.contract),
            Err(ContractError::Unauthorized)
        );
    }

    #[test]
    fn unlock_then_refund1_with_commitment() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        e.tick(4);
        let cmt = e.check("alice", "dave", 1, 4, "alpha", &f.contract).unwrap();
        assert!(crate::crypto::verify_sig(
            &f.contract.public(),
            &cmt.digest("alpha", 0),
            &cmt.signature
        ));
        let (st, proof) = unlock_proof(&f, &f.alice, 27, 27);
        e.tick(7);
        let paid = e.unlock("bob", &st, &proof, 7).unwrap();
        assert_eq!(paid[0].amount, 27);
        assert_eq!(e.state, EscrowState::Unlock);
        assert_eq!(e.frozen + e.available() + e.committed + e.unlocked, 30);

        assert_eq!(e.refund1("alice", 40), Err(ContractError::TooEarly));
        let out = e.refund1("alice", 41).unwrap();
        let to_dave: u64 = out.iter().filter(|p| p.to == "dave").map(|p| p.amount).sum();
        let to_alice: u64 = out.iter().filter(|p| p.to == "alice").map(|p| p.amount).sum();
        assert_eq!((to_dave, to_alice), (1, 2));
        assert!(e.is_settled());
        assert_eq!(e.credits.total(), 30);
    }

    #[test]
    fn unlock_gates() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        let (st, proof) = unlock_proof(&f, &f.alice, 27, 27);
        assert_eq!(e.unlock("bob", &st, &proof, 40), Err(ContractError::Timeout));
        assert_eq!(e.unlock("carol", &st, &proof, 5), Err(ContractError::Unauthorized));
        let (st_bob, proof_bob) = unlock_proof(&f, &f.bob, 27, 27);
        assert_eq!(
            e.unlock("bob", &st_bob, &proof_bob, 5),
            Err(ContractError::BadSignature)
        );
        let (st_over, proof_over) = unlock_proof(&f, &f.alice, 31, 31);
        assert!(matches!(
            e.unlock("bob", &st_over, &proof_over, 5),
            Err(ContractError::AmountOverBound { .. })
        ));
    }

    #[test]
    fn refund2_appeal_pays_commitments_first() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        e.tick(10);
        e.check("alice", "dave", 5, 10, "alpha", &f.contract).unwrap();
        let s2 = f.chain.secondary(0);
        let z = f.chain.offset(0);
        assert_eq!(
            e.refund2("alice", &s2, &z.flip_bit(0), 41, 10),
            Err(ContractError::HashMismatch)
        );
        e.refund2("alice", &s2, &z, 41, 10).unwrap();
        assert_eq!(e.appeal_deadline, Some(51));
        let wrong = Secret256([1; 32]);
        assert_eq!(e.appeal("miner", &wrong, 42), Err(ContractError::HashMismatch));
        let s1 = f.chain.primary(1) ^ z;
        let out = e.appeal("miner", &s1, 42).unwrap();
        assert_eq!(out[0].amount, 5);
        assert_eq!(out[1], Payout { to: "miner".into(), amount: 25, role: PayoutRole::Appellant });
        assert_eq!(e.credits.locker, 0);
        assert_eq!(e.state, EscrowState::Appeal);
    }

    #[test]
    fn appeal_after_window_rejected_then_finalize() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        e.refund2("alice", &f.chain.secondary(0), &f.chain.offset(0), 41, 10).unwrap();
        assert_eq!(
            e.appeal("miner", &f.chain.primary(0), 52),
            Err(ContractError::WindowClosed)
        );
        assert_eq!(e.finalize("alice", 51), Err(ContractError::TooEarly));
        let out = e.finalize("alice", 52).unwrap();
        assert_eq!(out, vec![Payout { to: "alice".into(), amount: 30, role: PayoutRole::Locker }]);
    }

    #[test]
    fn refund3_needs_beneficiary_signature() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        let (st, proof) = unlock_proof(&f, &f.alice, 27, 27);
        assert_eq!(e.refund3("alice", &st, &proof, 41), Err(ContractError::BadSignature));
        let (st, proof) = unlock_proof(&f, &f.bob, 27, 27);
        assert_eq!(e.refund3("alice", &st, &proof, 40), Err(ContractError::TooEarly));
        let (st_bad, proof_bad) = unlock_proof(&f, &f.bob, 28, 27);
        assert_eq!(
            e.refund3("alice", &st_bad, &proof_bad, 41),
            Err(ContractError::BadProof)
        );
        let out = e.refund3("alice", &st, &proof, 41).unwrap();
        assert_eq!(out[0], Payout { to: "bob".into(), amount: 27, role: PayoutRole::Beneficiary });
        assert_eq!(e.credits.locker, 3);
        assert_eq!(e.state, EscrowState::Refund);
    }

    #[test]
    fn refund1_from_lock_only_on_terminal_chain() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 1);
        assert!(matches!(e.refund1("alice", 41), Err(ContractError::WrongState(_))));
        e.secondary_lock = None;
        assert!(e.refund1("alice", 41).is_ok());
        assert!(matches!(e.refund1("alice", 42), Err(ContractError::WrongState(_))));
    }

    #[test]
    fn htlc_claim_by_preimage() {
        let f = fixture();
        let mut e = alpha_escrow(&f, 30, 0);
        e.mode = EscrowMode::Htlc;
        e.secondary_lock = None;
        assert_eq!(
            e.htlc_claim("bob", &f.chain.primary(1), 5),
            Err(ContractError::HashMismatch)
        );
        let out = e.htlc_claim("bob", &f.chain.primary(0), 5).unwrap();
        assert_eq!(out[0].amount, 30);
        assert!(e.is_settled());
    }
}
